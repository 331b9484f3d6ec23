//! Height-map evaluation: surface sampling, 2.5D rasterization, hole filling,
//! alignment refinement, completeness (CP) and median error (ME).

mod grid;
mod mesh;
mod metrics;

pub use grid::{
    fill_holes, load_height_grid, rasterize_height, save_height_grid, GridSidecar, GridSpec, HeightGrid, UtmZone,
    DEFAULT_CELL, FILL_QUORUM,
};
pub use mesh::{poisson_disk_sample, read_ply, POISSON_PATIENCE, vertex_sample, write_ply, write_points_ply, TriangleMesh};
pub use metrics::{
    compute_metrics, error_grid, evaluate_at, median, refine_alignment, Alignment, EvalReport,
    DEFAULT_SEARCH_CELLS, DEFAULT_THRESHOLD,
};

use thiserror::Error;

use crate::raster::RasterError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("PLY line {line}: {message}")]
    Ply { line: usize, message: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grids are not compatible: {0}")]
    Incompatible(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ground truth has no valid cells")]
    EmptyGroundTruth,
    #[error("reconstruction and ground truth share no valid cells")]
    NoOverlap,
    #[error("alignment failed: no offset within {0} cells overlaps the ground truth")]
    AlignmentFailure(usize),
    #[error("sidecar: {0}")]
    Sidecar(String),
}
