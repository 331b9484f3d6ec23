//! Multi-step helpers shared by the subcommands. Each is a short composition
//! of library operations.

use nalgebra::Vector3;

use satrecon::camera::{decompose_skew, FpcCamera};
use satrecon::depth::{
    build_reparam, fuse_depth_maps, recover_depth_map, skew_correct_depth_map, DepthMap, FusionParams, FusionView,
    ReparamProjection,
};
use satrecon::eval::{evaluate_at, fill_holes, rasterize_height, refine_alignment, Alignment, EvalReport, HeightGrid};

use crate::error::Result;

/// A camera with its depth map and reparameterization.
#[derive(Debug, Clone)]
pub struct DepthView {
    pub camera: FpcCamera,
    pub depth: DepthMap,
    pub projection: ReparamProjection,
}

/// Replaces the camera by its skew-free counterpart and warps the depth map
/// onto it. The reparameterization keeps `z_bar` and `d`.
pub fn skew_correct_view(view: &DepthView) -> Result<DepthView> {
    let dec = decompose_skew(&view.camera.intrinsics)?;
    let camera = view.camera.with_intrinsics(dec.k_s)?;
    let depth = skew_correct_depth_map(&view.depth, &dec.t_sp)?;
    let projection = build_reparam(&camera.projection_matrix(), view.projection.z_bar(), view.projection.d())?;
    Ok(DepthView { camera, depth, projection })
}

/// Skew correction followed by depth recovery; returns the skew-free camera
/// and its metric depth map.
pub fn metric_view(view: &DepthView) -> Result<(FpcCamera, DepthMap)> {
    let corrected = skew_correct_view(view)?;
    let metric = recover_depth_map(&corrected.depth, &corrected.projection)?;
    Ok((corrected.camera, metric))
}

pub fn fuse(views: &[(FpcCamera, DepthMap)], params: &FusionParams) -> Result<Vec<Vector3<f64>>> {
    let fusion: Vec<FusionView<'_>> =
        views.iter().map(|(camera, dm)| FusionView { camera, depth: dm.raster() }).collect();
    Ok(fuse_depth_maps(&fusion, params)?)
}

/// Fills holes in `recon`, optionally refines the alignment within `search`
/// cells, and scores it against `gt`.
pub fn evaluate_grid(recon: &HeightGrid, gt: &HeightGrid, threshold: f64, search: usize, align: bool) -> Result<EvalReport> {
    let filled = fill_holes(recon);
    let alignment = if align { refine_alignment(&filled, gt, search, threshold)? } else { Alignment::default() };
    Ok(evaluate_at(&filled, gt, alignment, threshold)?)
}

/// Rasterizes `points` on the ground-truth grid and scores them.
pub fn evaluate_points(points: &[Vector3<f64>], gt: &HeightGrid, threshold: f64, search: usize, align: bool) -> Result<EvalReport> {
    evaluate_grid(&rasterize_height(points, gt.spec()), gt, threshold, search, align)
}
