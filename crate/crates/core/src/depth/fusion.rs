use nalgebra::Vector3;
use rayon::prelude::*;

use super::DepthError;
use crate::camera::FpcCamera;
use crate::raster::Raster;

/// A metric depth map together with the (skew-free) camera it was rendered in.
#[derive(Debug, Clone, Copy)]
pub struct FusionView<'a> {
    pub camera: &'a FpcCamera,
    pub depth: &'a Raster,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    /// Largest depth disagreement, in scene units, that still counts as support.
    pub tolerance: f64,
    /// Number of other views that must support a point.
    pub min_consistent: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self { tolerance: 0.25, min_consistent: 1 }
    }
}

/// Whether `view` sees `point` at the depth it should: any of the four pixels
/// around the projection carries a depth within `tolerance`.
fn supports(view: &FusionView<'_>, point: &Vector3<f64>, tolerance: f64) -> bool {
    let z = view.camera.to_camera_frame(point).z;
    let Ok(px) = view.camera.project(point) else {
        return false;
    };
    let (x0, y0) = (px.x.floor(), px.y.floor());
    let (w, h) = (view.depth.width() as f64, view.depth.height() as f64);
    for dy in 0..2 {
        for dx in 0..2 {
            let (x, y) = (x0 + f64::from(dx), y0 + f64::from(dy));
            if x < 0.0 || y < 0.0 || x >= w || y >= h {
                continue;
            }
            if let Some(d) = view.depth.value(x as usize, y as usize, 0) {
                if (f64::from(d) - z).abs() <= tolerance {
                    return true;
                }
            }
        }
    }
    false
}

/// Back-projects every valid depth pixel and keeps points that at least
/// `min_consistent` other views agree with. Output order is view-major,
/// then row-major, independent of thread count.
pub fn fuse_depth_maps(views: &[FusionView<'_>], params: &FusionParams) -> Result<Vec<Vector3<f64>>, DepthError> {
    if !(params.tolerance.is_finite() && params.tolerance >= 0.0) {
        return Err(DepthError::InvalidParameter(format!("tolerance must be non-negative, got {}", params.tolerance)));
    }
    if params.min_consistent >= views.len().max(1) && params.min_consistent > 0 {
        return Err(DepthError::InvalidParameter(format!(
            "{} supporting views requested from {} views",
            params.min_consistent,
            views.len()
        )));
    }
    for view in views {
        if view.depth.channels() != 1 {
            return Err(DepthError::InvalidParameter("depth rasters must have one channel".into()));
        }
    }
    let mut points = Vec::new();
    for (i, view) in views.iter().enumerate() {
        let rows: Vec<Vec<Vector3<f64>>> = (0..view.depth.height())
            .into_par_iter()
            .map(|y| {
                let mut row = Vec::new();
                for x in 0..view.depth.width() {
                    let Some(z) = view.depth.value(x, y, 0) else { continue };
                    let Ok(pt) = view.camera.backproject(x as f64, y as f64, f64::from(z)) else { continue };
                    let support = views
                        .iter()
                        .enumerate()
                        .filter(|&(j, other)| j != i && supports(other, &pt, params.tolerance))
                        .count();
                    if support >= params.min_consistent {
                        row.push(pt);
                    }
                }
                row
            })
            .collect();
        points.extend(rows.into_iter().flatten());
    }
    Ok(points)
}
