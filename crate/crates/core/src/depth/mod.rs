//! Plane-plus-parallax depth reparameterization.
//!
//! A 3x4 projection `P3` is extended to an invertible 4x4 `P` by the row
//! `(0, 0, z_bar, -z_bar * d)`, so a world point `X` maps to
//! `Z * [u, v, 1, m]` with `m = z_bar * (z - d) / Z`. Depth maps then store the
//! well-conditioned `m` instead of the large conventional depth `Z`, which is
//! recovered from the fourth row of `P^-1`.

mod fusion;
mod map;
mod reparam;

pub use fusion::{fuse_depth_maps, FusionParams, FusionView};
pub use map::{
    load_depth_map, recover_depth_map, save_depth_map, sidecar_path, skew_correct_depth_map,
    skew_correct_raster, skew_correction_map, DepthKind, DepthMap, DepthSidecar,
};
pub use reparam::{
    build_reparam, forward_reparam_depth, mean_depth, recover_depth, ReparamProjection,
    AT_INFINITY_EPS, SINGULAR_EPS,
};

use thiserror::Error;

use crate::camera::CameraError;
use crate::raster::RasterError;

#[derive(Debug, Error)]
pub enum DepthError {
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("3x4 projection is rank deficient")]
    RankDeficient,
    #[error("reparameterized projection is singular (plane contains the camera center, residual {0:e})")]
    Singular(f64),
    #[error("point is not in front of the camera (depth {0:e})")]
    BehindCamera(f64),
    #[error("point maps to infinity (row dot product {0:e})")]
    PointAtInfinity(f64),
    #[error("expected a {expected} depth map, got {found}")]
    KindMismatch { expected: DepthKind, found: DepthKind },
    #[error("depth sidecar: {0}")]
    Sidecar(String),
}
