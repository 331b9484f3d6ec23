use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{recover_depth, DepthError, ReparamProjection};
use crate::raster::{load_raster, save_raster, warp_affine, AffineMap2D, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthKind {
    /// Reparameterized depth `m`.
    #[serde(rename = "m")]
    Reparameterized,
    /// Conventional depth `Z`.
    #[serde(rename = "z")]
    Metric,
}

impl fmt::Display for DepthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reparameterized => "m",
            Self::Metric => "z",
        })
    }
}

/// Single-channel depth raster tagged with its kind and source camera.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    raster: Raster,
    kind: DepthKind,
    camera_id: String,
}

impl DepthMap {
    pub fn new(raster: Raster, kind: DepthKind, camera_id: impl Into<String>) -> Result<Self, DepthError> {
        if raster.channels() != 1 {
            return Err(DepthError::InvalidParameter(format!(
                "depth maps have one channel, got {}",
                raster.channels()
            )));
        }
        if kind == DepthKind::Metric {
            if let Some(v) = raster.samples().iter().find(|&&v| !raster.is_nodata(v) && v <= 0.0) {
                return Err(DepthError::InvalidParameter(format!("metric depth must be positive, found {v}")));
            }
        }
        Ok(Self { raster, kind, camera_id: camera_id.into() })
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }
    pub fn kind(&self) -> DepthKind {
        self.kind
    }
    pub fn camera_id(&self) -> &str {
        &self.camera_id
    }
    pub fn into_raster(self) -> Raster {
        self.raster
    }
}

/// Applies [`recover_depth`] to every valid pixel, with pixel centers at
/// integer `(u, v)`. Pixels that do not recover to a positive depth become
/// nodata.
pub fn recover_depth_map(dm: &DepthMap, rp: &ReparamProjection) -> Result<DepthMap, DepthError> {
    if dm.kind != DepthKind::Reparameterized {
        return Err(DepthError::KindMismatch { expected: DepthKind::Reparameterized, found: dm.kind });
    }
    let src = &dm.raster;
    let (w, nodata) = (src.width(), src.nodata());
    let mut out = src.samples().to_vec();
    if w > 0 {
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, v) in row.iter_mut().enumerate() {
                if src.is_nodata(*v) {
                    continue;
                }
                *v = match recover_depth(rp, x as f64, y as f64, f64::from(*v)) {
                    Ok(z) if z > 0.0 && (z as f32) > 0.0 => z as f32,
                    _ => nodata,
                };
            }
        });
    }
    DepthMap::new(src.with_samples(out)?, DepthKind::Metric, dm.camera_id.clone())
}

/// Inverse-mapping warp for skew correction. Output pixel `p_s` of the
/// skew-free image reads the skewed image at `T_{s->p} * p_s`, because
/// `K_p X = T_{s->p} K_s X`.
pub fn skew_correction_map(t_sp: &Matrix3<f64>) -> Result<AffineMap2D, DepthError> {
    let t = t_sp;
    let unit_diag = (0..3).all(|i| t[(i, i)] == 1.0);
    let shear_only = t[(0, 2)] == 0.0 && t[(1, 0)] == 0.0 && t[(1, 2)] == 0.0;
    let bottom = t[(2, 0)] == 0.0 && t[(2, 1)] == 0.0;
    if !(unit_diag && shear_only && bottom) || !t[(0, 1)].is_finite() {
        return Err(DepthError::InvalidParameter(
            "skew-correcting matrix must be a translation-free unit-diagonal shear".into(),
        ));
    }
    Ok(AffineMap2D::new(*t_sp)?)
}

/// Skew-corrects an image of any channel count with Catmull-Rom resampling.
pub fn skew_correct_raster(raster: &Raster, t_sp: &Matrix3<f64>) -> Result<Raster, DepthError> {
    Ok(warp_affine(raster, &skew_correction_map(t_sp)?)?)
}

/// Skew-corrects a depth map. Values are resampled as plain scalars: the map
/// acts on pixel coordinates only, so the depth of a 3D point is unchanged.
pub fn skew_correct_depth_map(dm: &DepthMap, t_sp: &Matrix3<f64>) -> Result<DepthMap, DepthError> {
    let mut warped = skew_correct_raster(&dm.raster, t_sp)?;
    if dm.kind == DepthKind::Metric {
        // overshoot of the cubic kernel can push values at edges non-positive
        let samples = warped.samples().iter().map(|&v| if v > 0.0 { v } else { warped.nodata() }).collect();
        warped = warped.with_samples(samples)?;
    }
    DepthMap::new(warped, dm.kind, dm.camera_id.clone())
}

/// Depth sidecar document stored next to the raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub kind: DepthKind,
    pub camera_id: String,
    pub z_bar: f64,
    pub d: f64,
    pub n_p: f64,
    pub n_p_inv: f64,
    /// Normalized `P`, row-major.
    #[serde(rename = "P")]
    pub p: [f64; 16],
    /// Normalized `P^-1`, row-major.
    #[serde(rename = "P_inv")]
    pub p_inv: [f64; 16],
}

fn row_major(m: &Matrix4<f64>) -> [f64; 16] {
    let mut out = [0.0; 16];
    for (i, v) in out.iter_mut().enumerate() {
        *v = m[(i / 4, i % 4)];
    }
    out
}

impl DepthSidecar {
    pub fn new(dm: &DepthMap, rp: &ReparamProjection) -> Self {
        Self {
            kind: dm.kind,
            camera_id: dm.camera_id.clone(),
            z_bar: rp.z_bar(),
            d: rp.d(),
            n_p: rp.n_p(),
            n_p_inv: rp.n_p_inv(),
            p: row_major(rp.p()),
            p_inv: row_major(rp.p_inv()),
        }
    }

    pub fn projection(&self) -> Result<ReparamProjection, DepthError> {
        ReparamProjection::from_parts(
            Matrix4::from_row_slice(&self.p),
            Matrix4::from_row_slice(&self.p_inv),
            self.n_p,
            self.n_p_inv,
            self.z_bar,
            self.d,
        )
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DepthError> {
        toml::from_str(text).map_err(|e| DepthError::Sidecar(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, DepthError> {
        toml::to_string(self).map_err(|e| DepthError::Sidecar(e.to_string()))
    }
}

/// `<path>.toml`.
pub fn sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    let mut s = path.as_ref().as_os_str().to_owned();
    s.push(".toml");
    PathBuf::from(s)
}

pub fn save_depth_map(path: impl AsRef<Path>, dm: &DepthMap, rp: &ReparamProjection) -> Result<(), DepthError> {
    let path = path.as_ref();
    save_raster(&dm.raster, path)?;
    let text = DepthSidecar::new(dm, rp).to_toml_string()?;
    std::fs::write(sidecar_path(path), text).map_err(|e| DepthError::Sidecar(e.to_string()))
}

pub fn load_depth_map(path: impl AsRef<Path>) -> Result<(DepthMap, ReparamProjection), DepthError> {
    let path = path.as_ref();
    let raster = load_raster(path)?;
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| DepthError::Sidecar(format!("{}: {e}", side.display())))?;
    let meta = DepthSidecar::from_toml_str(&text)?;
    let rp = meta.projection()?;
    Ok((DepthMap::new(raster, meta.kind, meta.camera_id)?, rp))
}
