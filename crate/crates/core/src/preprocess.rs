//! Image preparation ahead of reconstruction: scene filtering, AOI cropping,
//! tone mapping and Brovey pan-sharpening.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{rpc_project, utm_to_geodetic, CameraError, Hemisphere, RpcCamera, RpcRecord};
use crate::raster::{cubic_interpolate, Raster, RasterError};

pub const DEFAULT_CLOUD_THRESHOLD: f64 = 0.5;
pub const DEFAULT_PERCENTILES: (f64, f64) = (0.5, 99.5);
pub const GAMMA: f64 = 2.2;
pub const DEFAULT_BROVEY_WEIGHTS: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
/// Brovey denominators below this produce nodata.
pub const BROVEY_MIN_DENOMINATOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("channel {0} has no valid samples")]
    EmptyChannel(usize),
    #[error("AOI does not intersect the image")]
    EmptyIntersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Panchromatic,
    Multispectral,
}

/// Per-scene metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub id: String,
    pub cloud_cover: f64,
    #[serde(default)]
    pub acquired: String,
    pub sensor: SensorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpc: Option<RpcRecord>,
}

impl SceneMetadata {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(0.0..=1.0).contains(&self.cloud_cover) {
            return Err(PreprocessError::InvalidParameter(format!(
                "cloud_cover {} outside [0, 1]",
                self.cloud_cover
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, PreprocessError> {
        let meta: Self =
            toml::from_str(text).map_err(|e| PreprocessError::InvalidParameter(e.to_string()))?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn to_toml_string(&self) -> Result<String, PreprocessError> {
        toml::to_string(self).map_err(|e| PreprocessError::InvalidParameter(e.to_string()))
    }

    pub fn rpc_camera(&self) -> Result<RpcCamera, PreprocessError> {
        let rec = self
            .rpc
            .as_ref()
            .ok_or_else(|| PreprocessError::InvalidParameter(format!("scene {} has no rpc table", self.id)))?;
        Ok(RpcCamera::try_from(rec)?)
    }
}

/// Keeps scenes with `cloud_cover <= threshold`, preserving order.
pub fn filter_by_cloud_cover(scenes: &[SceneMetadata], threshold: f64) -> Vec<&SceneMetadata> {
    scenes.iter().filter(|s| s.cloud_cover <= threshold).collect()
}

/// UTM area of interest. A zero-extent box (a point) is allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoiBox {
    pub e_min: f64,
    pub n_min: f64,
    pub e_max: f64,
    pub n_max: f64,
    pub zone: u8,
    pub hemisphere: Hemisphere,
}

impl AoiBox {
    pub fn new(
        e_min: f64,
        n_min: f64,
        e_max: f64,
        n_max: f64,
        zone: u8,
        hemisphere: Hemisphere,
    ) -> Result<Self, PreprocessError> {
        if !(e_min <= e_max && n_min <= n_max) {
            return Err(PreprocessError::InvalidParameter(format!(
                "AOI min must not exceed max ({e_min}, {n_min}) .. ({e_max}, {n_max})"
            )));
        }
        if !(1..=60).contains(&zone) {
            return Err(PreprocessError::InvalidParameter(format!("zone {zone} outside [1, 60]")));
        }
        Ok(Self { e_min, n_min, e_max, n_max, zone, hemisphere })
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.e_min, self.n_min),
            (self.e_max, self.n_min),
            (self.e_max, self.n_max),
            (self.e_min, self.n_max),
        ]
    }
}

/// Half-open pixel rectangle `[x0, x0 + width) x [y0, y0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

/// Projects the AOI corners through the RPC at a reference height and returns
/// their integer hull clipped to the image.
pub fn aoi_to_pixel_bbox(
    rpc: &RpcCamera,
    aoi: &AoiBox,
    height: f64,
    image_width: usize,
    image_height: usize,
) -> Result<PixelRect, PreprocessError> {
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (e, n) in aoi.corners() {
        let (lat, lon) = utm_to_geodetic(e, n, aoi.zone, aoi.hemisphere)?;
        let px = rpc_project(rpc, lat, lon, height)?;
        min = (min.0.min(px.sample), min.1.min(px.line));
        max = (max.0.max(px.sample), max.1.max(px.line));
    }
    let span = |lo: f64, hi: f64, limit: usize| -> Option<(usize, usize)> {
        let start = lo.floor();
        let end = hi.ceil().max(start + 1.0);
        let start = start.max(0.0);
        let end = end.min(limit as f64);
        (end > start).then_some((start as usize, (end - start) as usize))
    };
    match (span(min.0, max.0, image_width), span(min.1, max.1, image_height)) {
        (Some((x0, width)), Some((y0, height))) => Ok(PixelRect { x0, y0, width, height }),
        _ => Err(PreprocessError::EmptyIntersection),
    }
}

/// Nearest-rank percentile on sorted samples: index `round(p / 100 * (n - 1))`.
pub fn nearest_rank(sorted: &[f32], percent: f64) -> f32 {
    let n = sorted.len();
    let idx = (percent / 100.0 * (n - 1) as f64).round() as usize;
    sorted[idx.min(n - 1)]
}

fn check_percentiles(lo: f64, hi: f64) -> Result<(), PreprocessError> {
    if !(0.0 <= lo && lo < hi && hi <= 100.0) {
        return Err(PreprocessError::InvalidParameter(format!(
            "percentiles must satisfy 0 <= lo < hi <= 100 (got {lo}, {hi})"
        )));
    }
    Ok(())
}

fn channel_bounds(raster: &Raster, lo: f64, hi: f64) -> Result<Vec<(f32, f32)>, PreprocessError> {
    (0..raster.channels())
        .map(|c| {
            let mut vals = raster.channel_values(c);
            if vals.is_empty() {
                return Err(PreprocessError::EmptyChannel(c));
            }
            vals.sort_unstable_by(f32::total_cmp);
            Ok((nearest_rank(&vals, lo), nearest_rank(&vals, hi)))
        })
        .collect()
}

/// Clamps each channel independently to its `[lo, hi]` percentile values.
/// Nodata samples are ignored and preserved.
pub fn percentile_clip(raster: &Raster, lo: f64, hi: f64) -> Result<Raster, PreprocessError> {
    check_percentiles(lo, hi)?;
    let bounds = channel_bounds(raster, lo, hi)?;
    let c = raster.channels();
    let samples = raster
        .samples()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if raster.is_nodata(v) {
                v
            } else {
                let (a, b) = bounds[i % c];
                v.clamp(a, b)
            }
        })
        .collect();
    Ok(raster.with_samples(samples)?)
}

/// Maps a normalized intensity in `[0, 1]` to `0..=255` through `x^(1/2.2)`,
/// rounding half up.
pub fn gamma_to_u8(normalized: f64) -> u8 {
    let v = 255.0 * normalized.clamp(0.0, 1.0).powf(1.0 / GAMMA);
    (v + 0.5).floor().min(255.0) as u8
}

pub fn tonemap(raster: &Raster) -> Result<Raster, PreprocessError> {
    tonemap_with(raster, DEFAULT_PERCENTILES.0, DEFAULT_PERCENTILES.1)
}

/// Percentile clip, per-channel min-max normalization, gamma 1/2.2, scaling to
/// `0..=255`. Output samples are whole numbers; nodata is preserved.
pub fn tonemap_with(raster: &Raster, lo: f64, hi: f64) -> Result<Raster, PreprocessError> {
    if raster.samples().iter().any(|&v| !raster.is_nodata(v) && v < 0.0) {
        return Err(PreprocessError::InvalidParameter("tone mapping expects non-negative intensities".into()));
    }
    let clipped = percentile_clip(raster, lo, hi)?;
    let c = clipped.channels();
    let ranges: Vec<(f32, f32)> = (0..c)
        .map(|ch| {
            let vals = clipped.channel_values(ch);
            let min = vals.iter().copied().fold(f32::INFINITY, f32::min);
            let max = vals.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            (min, max)
        })
        .collect();
    let samples = clipped
        .samples()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if clipped.is_nodata(v) {
                return v;
            }
            let (min, max) = ranges[i % c];
            let norm = if max > min { (f64::from(v) - f64::from(min)) / (f64::from(max) - f64::from(min)) } else { 0.0 };
            f32::from(gamma_to_u8(norm))
        })
        .collect();
    Ok(clipped.with_samples(samples)?)
}

fn normalized_weights(weights: [f64; 3]) -> Result<[f64; 3], PreprocessError> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(PreprocessError::InvalidParameter("Brovey weights must be finite and non-negative".into()));
    }
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(PreprocessError::InvalidParameter("Brovey weights are all zero".into()));
    }
    Ok(weights.map(|w| w / sum))
}

/// Weighted Brovey fusion:
/// `out_c = msi_c * pan / sum_k(w_k * msi_k)` with weights normalized to sum 1.
///
/// The multispectral raster is resampled onto the pan grid with Catmull-Rom
/// interpolation when the two differ in size (pixel areas aligned).
pub fn pansharpen_brovey(pan: &Raster, msi: &Raster, weights: [f64; 3]) -> Result<Raster, PreprocessError> {
    if pan.channels() != 1 || msi.channels() != 3 {
        return Err(PreprocessError::InvalidParameter(format!(
            "expected 1-channel pan and 3-channel msi, got {} and {}",
            pan.channels(),
            msi.channels()
        )));
    }
    if pan.width() == 0 || pan.height() == 0 || msi.width() == 0 || msi.height() == 0 {
        return Err(PreprocessError::InvalidParameter("dimension ratio must be positive".into()));
    }
    let w = normalized_weights(weights)?;
    let sx = msi.width() as f64 / pan.width() as f64;
    let sy = msi.height() as f64 / pan.height() as f64;
    let same = msi.width() == pan.width() && msi.height() == pan.height();
    let width = pan.width();
    let mut out = vec![f32::NAN; width * pan.height() * 3];
    out.par_chunks_mut(width * 3).enumerate().for_each(|(y, row)| {
        for x in 0..width {
            let p = pan.get(x, y, 0);
            if pan.is_nodata(p) {
                continue;
            }
            let mut bands = [0.0f64; 3];
            let mut valid = true;
            for (c, band) in bands.iter_mut().enumerate() {
                let v = if same {
                    msi.get(x, y, c)
                } else {
                    let mx = (x as f64 + 0.5) * sx - 0.5;
                    let my = (y as f64 + 0.5) * sy - 0.5;
                    cubic_interpolate(msi, mx, my, c).unwrap_or(f32::NAN)
                };
                if msi.is_nodata(v) {
                    valid = false;
                }
                *band = f64::from(v);
            }
            if !valid {
                continue;
            }
            let denom: f64 = bands.iter().zip(&w).map(|(b, wk)| b * wk).sum();
            if denom.abs() < BROVEY_MIN_DENOMINATOR {
                continue;
            }
            let ratio = f64::from(p) / denom;
            for c in 0..3 {
                row[x * 3 + c] = (bands[c] * ratio) as f32;
            }
        }
    });
    Ok(Raster::new(width, pan.height(), 3, out, f32::NAN)?)
}
