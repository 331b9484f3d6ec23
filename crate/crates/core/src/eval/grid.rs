use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::camera::Hemisphere;
use crate::depth::sidecar_path;
use crate::raster::{load_raster, save_raster, Raster};

pub const DEFAULT_CELL: f64 = 0.5;
/// Filled neighbors (of 8) an empty cell needs before it is filled.
pub const FILL_QUORUM: usize = 5;

/// Grid geometry. Cell `(i, j)` covers
/// `[origin_e + i*cell, origin_e + (i+1)*cell) x [origin_n + j*cell, origin_n + (j+1)*cell)`,
/// so row `j = 0` is the southernmost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin_e: f64,
    pub origin_n: f64,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(origin_e: f64, origin_n: f64, cell: f64, nx: usize, ny: usize) -> Result<Self, EvalError> {
        if !(cell.is_finite() && cell > 0.0) {
            return Err(EvalError::InvalidGrid(format!("cell must be positive, got {cell}")));
        }
        if !(origin_e.is_finite() && origin_n.is_finite()) {
            return Err(EvalError::InvalidGrid("non-finite origin".into()));
        }
        Ok(Self { origin_e, origin_n, cell, nx, ny })
    }

    /// Smallest grid aligned to `cell` multiples that covers the points'
    /// footprint.
    pub fn covering(points: &[Vector3<f64>], cell: f64) -> Result<Self, EvalError> {
        if points.is_empty() {
            return Err(EvalError::InvalidGrid("no points to cover".into()));
        }
        let (mut e0, mut n0, mut e1, mut n1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            e0 = e0.min(p.x);
            n0 = n0.min(p.y);
            e1 = e1.max(p.x);
            n1 = n1.max(p.y);
        }
        let oe = (e0 / cell).floor() * cell;
        let on = (n0 / cell).floor() * cell;
        let nx = ((e1 - oe) / cell).floor() as usize + 1;
        let ny = ((n1 - on) / cell).floor() as usize + 1;
        Self::new(oe, on, cell, nx, ny)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell containing `(e, n)` under the half-open convention.
    pub fn cell_of(&self, e: f64, n: f64) -> Option<(usize, usize)> {
        let i = ((e - self.origin_e) / self.cell).floor();
        let j = ((n - self.origin_n) / self.cell).floor();
        (i >= 0.0 && j >= 0.0 && i < self.nx as f64 && j < self.ny as f64).then_some((i as usize, j as usize))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (self.origin_e + (i as f64 + 0.5) * self.cell, self.origin_n + (j as f64 + 0.5) * self.cell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtmZone {
    pub zone: u8,
    pub hemisphere: Hemisphere,
}

/// 2.5D height map; NaN marks empty cells.
#[derive(Debug, Clone)]
pub struct HeightGrid {
    spec: GridSpec,
    heights: Vec<f32>,
    utm: Option<UtmZone>,
}

impl PartialEq for HeightGrid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.utm == other.utm
            && self.heights.iter().map(|v| v.to_bits()).eq(other.heights.iter().map(|v| v.to_bits()))
    }
}

impl HeightGrid {
    pub fn new(spec: GridSpec, heights: Vec<f32>) -> Result<Self, EvalError> {
        if heights.len() != spec.len() {
            return Err(EvalError::InvalidGrid(format!("{} heights for {}x{} cells", heights.len(), spec.nx, spec.ny)));
        }
        if heights.iter().any(|v| v.is_infinite()) {
            return Err(EvalError::InvalidGrid("infinite height".into()));
        }
        Ok(Self { spec, heights, utm: None })
    }

    pub fn empty(spec: GridSpec) -> Self {
        Self { spec, heights: vec![f32::NAN; spec.len()], utm: None }
    }

    pub fn with_utm(mut self, utm: UtmZone) -> Self {
        self.utm = Some(utm);
        self
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn heights(&self) -> &[f32] {
        &self.heights
    }
    pub fn utm(&self) -> Option<UtmZone> {
        self.utm
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f32> {
        let v = self.heights[j * self.spec.nx + i];
        (!v.is_nan()).then_some(v)
    }

    /// Height at signed indices; `None` outside the grid or for empty cells.
    pub fn get_signed(&self, i: i64, j: i64) -> Option<f32> {
        if i < 0 || j < 0 || i >= self.spec.nx as i64 || j >= self.spec.ny as i64 {
            return None;
        }
        self.get(i as usize, j as usize)
    }

    pub fn valid_count(&self) -> usize {
        self.heights.iter().filter(|v| !v.is_nan()).count()
    }
}

/// Max height per cell over the points falling in it.
pub fn rasterize_height(points: &[Vector3<f64>], spec: &GridSpec) -> HeightGrid {
    let mut best = vec![f64::NEG_INFINITY; spec.len()];
    for p in points {
        if let Some((i, j)) = spec.cell_of(p.x, p.y) {
            let b = &mut best[j * spec.nx + i];
            *b = b.max(p.z);
        }
    }
    let heights = best.into_iter().map(|v| if v == f64::NEG_INFINITY { f32::NAN } else { v as f32 }).collect();
    HeightGrid { spec: *spec, heights, utm: None }
}

/// One pass: an empty cell with at least [`FILL_QUORUM`] filled 8-neighbors
/// takes their median. Neighbors are read from the input grid only.
pub fn fill_holes(grid: &HeightGrid) -> HeightGrid {
    let (nx, ny) = (grid.spec.nx as i64, grid.spec.ny as i64);
    let mut out = grid.clone();
    let mut nb = Vec::with_capacity(8);
    for j in 0..ny {
        for i in 0..nx {
            if grid.get_signed(i, j).is_some() {
                continue;
            }
            nb.clear();
            for dj in -1..=1 {
                for di in -1..=1 {
                    if (di, dj) != (0, 0) {
                        if let Some(v) = grid.get_signed(i + di, j + dj) {
                            nb.push(f64::from(v));
                        }
                    }
                }
            }
            if nb.len() >= FILL_QUORUM {
                out.heights[(j * nx + i) as usize] = super::median(&mut nb) as f32;
            }
        }
    }
    out
}

/// Height-grid sidecar document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub origin_e: f64,
    pub origin_n: f64,
    pub cell: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hemisphere: Option<Hemisphere>,
}

/// Writes the heights as a 1-channel raster (`width = nx`, raster row `j` =
/// grid row `j`, southernmost first) plus a `<path>.toml` sidecar.
pub fn save_height_grid(path: impl AsRef<Path>, grid: &HeightGrid) -> Result<(), EvalError> {
    let path = path.as_ref();
    let raster = Raster::new(grid.spec.nx, grid.spec.ny, 1, grid.heights.clone(), f32::NAN)?;
    save_raster(&raster, path)?;
    let side = GridSidecar {
        origin_e: grid.spec.origin_e,
        origin_n: grid.spec.origin_n,
        cell: grid.spec.cell,
        zone: grid.utm.map(|u| u.zone),
        hemisphere: grid.utm.map(|u| u.hemisphere),
    };
    let text = toml::to_string(&side).map_err(|e| EvalError::Sidecar(e.to_string()))?;
    std::fs::write(sidecar_path(path), text)?;
    Ok(())
}

pub fn load_height_grid(path: impl AsRef<Path>) -> Result<HeightGrid, EvalError> {
    let path = path.as_ref();
    let raster = load_raster(path)?;
    if raster.channels() != 1 {
        return Err(EvalError::InvalidGrid("height grids have one channel".into()));
    }
    let text = std::fs::read_to_string(sidecar_path(path))?;
    let side: GridSidecar = toml::from_str(&text).map_err(|e| EvalError::Sidecar(e.to_string()))?;
    let spec = GridSpec::new(side.origin_e, side.origin_n, side.cell, raster.width(), raster.height())?;
    let heights = raster.samples().iter().map(|&v| if raster.is_nodata(v) { f32::NAN } else { v }).collect();
    let grid = HeightGrid::new(spec, heights)?;
    Ok(match (side.zone, side.hemisphere) {
        (Some(zone), Some(hemisphere)) => grid.with_utm(UtmZone { zone, hemisphere }),
        (None, None) => grid,
        _ => return Err(EvalError::Sidecar("zone and hemisphere must be given together".into())),
    })
}
