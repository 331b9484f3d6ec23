//! Synthetic scenes: axis-aligned boxes on a flat ground plane, seen by
//! skewed pinhole cameras from a few kilometers away.
//!
//! Scene coordinates are a local metric frame (`x` east, `y` north, `z` up)
//! whose origin is the south-west corner of the evaluated square.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use satrecon::camera::{CameraFile, FpcCamera, FpcIntrinsics, FpcRecord, write_camera_file};
use satrecon::depth::{build_reparam, forward_reparam_depth, save_depth_map, DepthKind, DepthMap, ReparamProjection};
use satrecon::eval::{save_height_grid, write_ply, GridSpec, HeightGrid, TriangleMesh};
use satrecon::raster::{save_raster, Raster};

use crate::error::{CliError, Result};

/// Scene generator settings. Lengths are meters, angles degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub boxes: usize,
    pub cameras: usize,
    pub width: usize,
    pub height: usize,
    /// Side of the evaluated square.
    pub extent: f64,
    pub cell: f64,
    pub ground_height: f64,
    /// Box footprint side range.
    pub box_size: [f64; 2],
    pub box_height: [f64; 2],
    /// Minimum ground gap between boxes and to the square's border.
    pub gap: f64,
    /// Camera distance to the scene center.
    pub distance: f64,
    /// Off-nadir angle range.
    pub tilt: [f64; 2],
    /// Range of `|s| / f_y`.
    pub skew: [f64; 2],
    /// Ground visible around the square at the image border.
    pub frame_margin: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            boxes: 20,
            cameras: 4,
            width: 512,
            height: 512,
            extent: 64.0,
            cell: 0.5,
            ground_height: 100.0,
            box_size: [3.0, 8.0],
            box_height: [3.0, 12.0],
            gap: 4.0,
            distance: 10_000.0,
            tilt: [10.0, 15.0],
            skew: [0.01, 0.03],
            frame_margin: 8.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::InvalidParameter(format!("synth: {m}")));
        let cells = self.extent / self.cell;
        if !(self.cell > 0.0 && self.extent > 0.0) || (cells - cells.round()).abs() > 1e-9 {
            return bad("extent must be a positive multiple of cell");
        }
        if self.cameras == 0 || self.width < 8 || self.height < 8 {
            return bad("need at least one camera and 8x8 images");
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1];
        if !(ordered(self.box_size) && ordered(self.box_height) && ordered(self.tilt) && ordered(self.skew)) {
            return bad("ranges must be finite, non-negative and ordered");
        }
        if self.box_size[0] < self.cell || self.box_height[0] <= 0.0 || self.tilt[1] >= 60.0 {
            return bad("boxes must span a cell and stand above ground; tilt below 60 degrees");
        }
        if !(self.distance > 10.0 * self.extent && self.gap >= 0.0 && self.frame_margin >= 0.0) {
            return bad("distance must exceed ten scene extents; gap and margin non-negative");
        }
        Ok(())
    }

    fn cells(&self) -> usize {
        (self.extent / self.cell).round() as usize
    }

    /// Minimum scene height minus 10 m: the reference plane of the depth
    /// reparameterization.
    pub fn reference_plane(&self) -> f64 {
        self.ground_height - 10.0
    }
}

/// An axis-aligned box standing on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
    /// Height above ground.
    pub height: f64,
    pub albedo: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SynthConfig,
    pub seed: u64,
    pub boxes: Vec<SceneBox>,
    pub mesh: TriangleMesh,
    pub ground_truth: HeightGrid,
    pub cameras: Vec<FpcCamera>,
    /// Shaded intensity images.
    pub images: Vec<Raster>,
    /// Reparameterized (`m`) depth maps.
    pub depth_maps: Vec<DepthMap>,
    pub projections: Vec<ReparamProjection>,
}

/// Box edges fall on cell centers, so every grid cell is either untouched by
/// a box or overlaps its top by at least half a cell.
fn place_boxes(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<SceneBox>> {
    let c = cfg.cell;
    let n = cfg.cells() as i64;
    let size_cells = |v: f64| ((v / c).round() as i64).max(1);
    let (smin, smax) = (size_cells(cfg.box_size[0]), size_cells(cfg.box_size[1]));
    let border = (cfg.gap / c).ceil() as i64;
    let mut boxes: Vec<SceneBox> = Vec::with_capacity(cfg.boxes);
    let mut attempts = 0;
    while boxes.len() < cfg.boxes {
        attempts += 1;
        if attempts > 200 * cfg.boxes.max(1) {
            return Err(CliError::InvalidParameter(format!(
                "synth: could only place {} of {} boxes; enlarge the extent or shrink the gap",
                boxes.len(),
                cfg.boxes
            )));
        }
        let (w, h) = (rng.random_range(smin..=smax), rng.random_range(smin..=smax));
        let height = rng.random_range(cfg.box_height[0]..=cfg.box_height[1]);
        let albedo = rng.random_range(0.35..0.9);
        let (hi_x, hi_y) = (n - border - w - 1, n - border - h - 1);
        if hi_x < border || hi_y < border {
            continue;
        }
        let (i0, j0) = (rng.random_range(border..=hi_x), rng.random_range(border..=hi_y));
        let min = [(i0 as f64 + 0.5) * c, (j0 as f64 + 0.5) * c];
        let max = [min[0] + w as f64 * c, min[1] + h as f64 * c];
        let clear = boxes.iter().all(|b| {
            let dx = (b.min[0] - max[0]).max(min[0] - b.max[0]);
            let dy = (b.min[1] - max[1]).max(min[1] - b.max[1]);
            dx.max(dy) >= cfg.gap
        });
        if clear {
            boxes.push(SceneBox { min, max, height, albedo });
        }
    }
    Ok(boxes)
}

fn build_mesh(cfg: &SynthConfig, boxes: &[SceneBox]) -> Result<TriangleMesh> {
    let g = cfg.ground_height;
    let (lo, hi) = (-ground_margin(cfg), cfg.extent + ground_margin(cfg));
    let ground = vec![
        Vector3::new(lo, lo, g),
        Vector3::new(hi, lo, g),
        Vector3::new(hi, hi, g),
        Vector3::new(lo, hi, g),
    ];
    let mut mesh = TriangleMesh::new(ground, vec![[0, 1, 2], [0, 2, 3]])?;
    for b in boxes {
        let top = g + b.height;
        let mut v = Vec::with_capacity(8);
        for z in [g, top] {
            v.push(Vector3::new(b.min[0], b.min[1], z));
            v.push(Vector3::new(b.max[0], b.min[1], z));
            v.push(Vector3::new(b.max[0], b.max[1], z));
            v.push(Vector3::new(b.min[0], b.max[1], z));
        }
        // top, then four walls, outward-facing counter-clockwise
        let mut faces = vec![[4, 5, 6], [4, 6, 7]];
        for k in 0..4 {
            let k1 = (k + 1) % 4;
            faces.push([k, k1, k1 + 4]);
            faces.push([k, k1 + 4, k + 4]);
        }
        mesh.append(&TriangleMesh::new(v, faces)?);
    }
    Ok(mesh)
}

/// Ground beyond the evaluated square: the tilted, sheared image footprint
/// plus one frame margin of slack, so every pixel hits geometry.
fn ground_margin(cfg: &SynthConfig) -> f64 {
    let half_view = (cfg.extent / 2.0 + cfg.frame_margin) * (1.0 + cfg.skew[1]) / cfg.tilt[1].to_radians().cos().powi(2);
    half_view - cfg.extent / 2.0 + cfg.frame_margin
}

/// Maximum mesh height per cell, computed from the box footprints.
fn ground_truth(cfg: &SynthConfig, boxes: &[SceneBox]) -> Result<HeightGrid> {
    let n = cfg.cells();
    let spec = GridSpec::new(0.0, 0.0, cfg.cell, n, n)?;
    let c = cfg.cell;
    let mut heights = vec![cfg.ground_height as f32; n * n];
    for j in 0..n {
        for i in 0..n {
            let (x0, y0) = (i as f64 * c, j as f64 * c);
            for b in boxes {
                let overlaps = b.min[0] < x0 + c && b.max[0] >= x0 && b.min[1] < y0 + c && b.max[1] >= y0;
                if overlaps {
                    let h = (cfg.ground_height + b.height) as f32;
                    heights[j * n + i] = heights[j * n + i].max(h);
                }
            }
        }
    }
    Ok(HeightGrid::new(spec, heights)?)
}

fn place_cameras(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<FpcCamera>> {
    let center = Vector3::new(cfg.extent / 2.0, cfg.extent / 2.0, cfg.ground_height);
    let f = cfg.distance * cfg.width.min(cfg.height) as f64 / (cfg.extent + 2.0 * cfg.frame_margin);
    let (px, py) = ((cfg.width as f64 - 1.0) / 2.0, (cfg.height as f64 - 1.0) / 2.0);
    let mut cams = Vec::with_capacity(cfg.cameras);
    for k in 0..cfg.cameras {
        let azimuth = 2.0 * PI * (k as f64 + 0.5) / cfg.cameras as f64 + rng.random_range(-0.1..=0.1);
        let tilt = rng.random_range(cfg.tilt[0]..=cfg.tilt[1]).to_radians();
        let dir = Vector3::new(tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), tilt.cos());
        let fy = f * (1.0 + rng.random_range(-0.01..=0.01));
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let s = sign * fy * rng.random_range(cfg.skew[0]..=cfg.skew[1]);
        // the look-at target sits on the optical axis, i.e. at the principal point
        let k_p = FpcIntrinsics::new(f, fy, s, px, py)?;
        cams.push(FpcCamera::look_at(k_p, center + dir * cfg.distance, center, Vector3::y())?);
    }
    Ok(cams)
}

/// Nearest surface hit along a ray: `(t, normal, albedo)`.
fn cast(cfg: &SynthConfig, boxes: &[SceneBox], origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Vector3<f64>, f64)> {
    let g = cfg.ground_height;
    let mut best: Option<(f64, Vector3<f64>, f64)> = None;
    if dir.z < 0.0 {
        let t = (g - origin.z) / dir.z;
        let p = origin + dir * t;
        let albedo = 0.55 + 0.15 * (0.9 * p.x).sin() * (0.7 * p.y).sin() + 0.1 * (0.13 * (p.x + p.y)).sin();
        best = Some((t, Vector3::z(), albedo));
    }
    for b in boxes {
        let lo = [b.min[0], b.min[1], g];
        let hi = [b.max[0], b.max[1], g + b.height];
        let (mut t_near, mut t_far, mut axis) = (f64::NEG_INFINITY, f64::INFINITY, 0);
        let mut hit = true;
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < lo[a] || origin[a] > hi[a] {
                    hit = false;
                    break;
                }
                continue;
            }
            let (t0, t1) = ((lo[a] - origin[a]) / dir[a], (hi[a] - origin[a]) / dir[a]);
            let (t0, t1) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
            if t0 > t_near {
                t_near = t0;
                axis = a;
            }
            t_far = t_far.min(t1);
        }
        if !hit || t_near > t_far || t_near <= 0.0 || best.is_some_and(|(t, _, _)| t <= t_near) {
            continue;
        }
        let mut normal = Vector3::zeros();
        normal[axis] = -dir[axis].signum();
        best = Some((t_near, normal, b.albedo));
    }
    best
}

fn sun() -> Vector3<f64> {
    Vector3::new(0.35, -0.45, 0.82).normalize()
}

/// Per pixel: intensity, camera-frame depth `Z` and the world hit point.
type Pixel = (f32, f64, Option<Vector3<f64>>);
type Rendering = (Raster, Vec<f64>, Vec<Option<Vector3<f64>>>);

/// Renders intensity, camera-frame depth `Z` and world points for one camera.
fn render(cfg: &SynthConfig, boxes: &[SceneBox], cam: &FpcCamera) -> Result<Rendering> {
    let (w, h) = (cfg.width, cfg.height);
    let k_inv: Matrix3<f64> = satrecon::camera::fpc_invert(&cam.intrinsics)?;
    let r_t = cam.rotation.transpose();
    let origin = cam.center();
    let rows: Vec<Vec<Pixel>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    // camera-frame ray with unit z: the hit parameter is the depth Z
                    let dir = r_t * (k_inv * Vector3::new(x as f64, y as f64, 1.0));
                    match cast(cfg, boxes, &origin, &dir) {
                        Some((t, n, albedo)) => {
                            let shade = 0.25 + 0.75 * n.dot(&sun()).max(0.0);
                            ((1000.0 * albedo * shade) as f32, t, Some(origin + dir * t))
                        }
                        None => (f32::NAN, f64::NAN, None),
                    }
                })
                .collect()
        })
        .collect();
    let flat: Vec<_> = rows.into_iter().flatten().collect();
    let image = Raster::new(w, h, 1, flat.iter().map(|p| p.0).collect(), f32::NAN)?;
    Ok((image, flat.iter().map(|p| p.1).collect(), flat.into_iter().map(|p| p.2).collect()))
}

/// Builds the scene deterministically from `seed`.
pub fn generate_synthetic_scene(config: &SynthConfig, seed: u64) -> Result<SyntheticScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes = place_boxes(config, &mut rng)?;
    let mesh = build_mesh(config, &boxes)?;
    let ground_truth = ground_truth(config, &boxes)?;
    let cameras = place_cameras(config, &mut rng)?;
    let (mut images, mut depth_maps, mut projections) = (Vec::new(), Vec::new(), Vec::new());
    for (k, cam) in cameras.iter().enumerate() {
        let (image, z, points) = render(config, &boxes, cam)?;
        let valid: Vec<f64> = z.iter().copied().filter(|v| v.is_finite()).collect();
        if valid.is_empty() {
            return Err(CliError::InvalidParameter(format!("synth: camera {k} sees no geometry")));
        }
        let z_bar = valid.iter().sum::<f64>() / valid.len() as f64;
        let rp = build_reparam(&cam.projection_matrix(), z_bar, config.reference_plane())?;
        let m = points
            .iter()
            .map(|p| match p {
                Some(p) => forward_reparam_depth(&rp, p).map(|(_, _, m)| m as f32),
                None => Ok(f32::NAN),
            })
            .collect::<Result<Vec<f32>, _>>()?;
        let m = Raster::new(config.width, config.height, 1, m, f32::NAN)?;
        depth_maps.push(DepthMap::new(m, DepthKind::Reparameterized, camera_id(k))?);
        projections.push(rp);
        images.push(image);
    }
    Ok(SyntheticScene { config: config.clone(), seed, boxes, mesh, ground_truth, cameras, images, depth_maps, projections })
}

pub fn camera_id(k: usize) -> String {
    format!("cam{k}")
}

/// Scene summary written as `scene.toml`.
#[derive(Debug, Serialize)]
struct SceneRecord<'a> {
    seed: u64,
    config: &'a SynthConfig,
    boxes: &'a [SceneBox],
}

impl SyntheticScene {
    /// Writes `scene.toml`, `mesh.ply`, `gt.hgrid`, and per camera `camK.toml`,
    /// `imageK.srtk`, `depthK.srtk` (with sidecars).
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let record = SceneRecord { seed: self.seed, config: &self.config, boxes: &self.boxes };
        let text = toml::to_string(&record).map_err(|e| CliError::Config(e.to_string()))?;
        let path = dir.join("scene.toml");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        let path = dir.join("mesh.ply");
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        write_ply(&mut w, &self.mesh)?;
        std::io::Write::flush(&mut w).map_err(|e| CliError::io(&path, e))?;
        save_height_grid(dir.join("gt.hgrid"), &self.ground_truth)?;
        for (k, cam) in self.cameras.iter().enumerate() {
            let file = CameraFile {
                id: Some(camera_id(k)),
                width: Some(self.config.width),
                height: Some(self.config.height),
                fpc: Some(FpcRecord::from(cam)),
                rpc: None,
            };
            write_camera_file(dir.join(format!("cam{k}.toml")), &file)?;
            save_raster(&self.images[k], dir.join(format!("image{k}.srtk")))?;
            save_depth_map(dir.join(format!("depth{k}.srtk")), &self.depth_maps[k], &self.projections[k])?;
        }
        Ok(())
    }
}
