//! Satellite-specific geometry for multi-date surface reconstruction.
//!
//! - [`camera`]: finite projective and rational polynomial cameras, skew
//!   decomposition, UTM conversion.
//! - [`raster`]: float rasters, the `SRTK1` file format, Catmull-Rom sampling
//!   and affine warping.
//! - [`preprocess`]: cloud filtering, AOI extraction, tone mapping, Brovey
//!   pan-sharpening.
//! - [`depth`]: plane-plus-parallax depth reparameterization and recovery,
//!   depth-map skew correction, back-projection fusion.
//! - [`eval`]: mesh sampling, height-grid rasterization, hole filling,
//!   alignment refinement, completeness and median error.

pub mod camera;
pub mod raster;
pub mod preprocess;
pub mod depth;
pub mod eval;
