//! Camera documents (TOML). Layout is described in `docs/formats.md`.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CameraError, FpcCamera, FpcIntrinsics, RpcCamera, RpcNormalization};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcRecord {
    pub fx: f64,
    pub fy: f64,
    pub s: f64,
    pub px: f64,
    pub py: f64,
    /// World-to-camera rotation, row-major.
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpcRecord {
    pub line_num: [f64; 20],
    pub line_den: [f64; 20],
    pub samp_num: [f64; 20],
    pub samp_den: [f64; 20],
    pub offsets: RpcNormalization,
    pub scales: RpcNormalization,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpc: Option<FpcRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rpc: Option<RpcRecord>,
}

impl From<&FpcCamera> for FpcRecord {
    fn from(cam: &FpcCamera) -> Self {
        let k = cam.intrinsics;
        let mut r = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                r[row * 3 + col] = cam.rotation[(row, col)];
            }
        }
        Self {
            fx: k.fx,
            fy: k.fy,
            s: k.s,
            px: k.px,
            py: k.py,
            r,
            t: [cam.translation.x, cam.translation.y, cam.translation.z],
        }
    }
}

impl TryFrom<&FpcRecord> for FpcCamera {
    type Error = CameraError;

    fn try_from(rec: &FpcRecord) -> Result<Self, Self::Error> {
        let k = FpcIntrinsics::new(rec.fx, rec.fy, rec.s, rec.px, rec.py)?;
        FpcCamera::new(k, Matrix3::from_row_slice(&rec.r), Vector3::from_column_slice(&rec.t))
    }
}

impl From<&RpcCamera> for RpcRecord {
    fn from(rpc: &RpcCamera) -> Self {
        Self {
            line_num: *rpc.line_num(),
            line_den: *rpc.line_den(),
            samp_num: *rpc.samp_num(),
            samp_den: *rpc.samp_den(),
            offsets: *rpc.offsets(),
            scales: *rpc.scales(),
        }
    }
}

impl TryFrom<&RpcRecord> for RpcCamera {
    type Error = CameraError;

    fn try_from(rec: &RpcRecord) -> Result<Self, Self::Error> {
        RpcCamera::new(rec.line_num, rec.line_den, rec.samp_num, rec.samp_den, rec.offsets, rec.scales)
    }
}

impl CameraFile {
    pub fn fpc_camera(&self) -> Result<FpcCamera, CameraError> {
        self.fpc
            .as_ref()
            .ok_or_else(|| CameraError::File("missing [fpc] table".into()))
            .and_then(FpcCamera::try_from)
    }

    pub fn rpc_camera(&self) -> Result<RpcCamera, CameraError> {
        self.rpc
            .as_ref()
            .ok_or_else(|| CameraError::File("missing [rpc] table".into()))
            .and_then(RpcCamera::try_from)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CameraError> {
        toml::from_str(text).map_err(|e| CameraError::File(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, CameraError> {
        toml::to_string(self).map_err(|e| CameraError::File(e.to_string()))
    }
}

pub fn read_camera_file(path: impl AsRef<Path>) -> Result<CameraFile, CameraError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| CameraError::File(format!("{}: {e}", path.display())))?;
    CameraFile::from_toml_str(&text)
}

pub fn write_camera_file(path: impl AsRef<Path>, file: &CameraFile) -> Result<(), CameraError> {
    let path = path.as_ref();
    std::fs::write(path, file.to_toml_string()?)
        .map_err(|e| CameraError::File(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fpc_round_trip_through_text() {
        let k = FpcIntrinsics::new(81234.5, 80999.25, 12.345678901234, 255.5, 256.25).unwrap();
        let cam = FpcCamera::look_at(
            k,
            Vector3::new(1234.5, -2200.0, 9000.0),
            Vector3::new(3.0, 4.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        )
        .unwrap();
        let file = CameraFile { id: Some("cam0".into()), fpc: Some((&cam).into()), ..Default::default() };
        let text = file.to_toml_string().unwrap();
        assert!(text.contains("[fpc]") && text.contains("R = ["));
        let back = CameraFile::from_toml_str(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.fpc_camera().unwrap(), cam);
        assert!(back.rpc_camera().is_err());
    }

    #[test]
    fn rpc_table_parses() {
        let mut text = String::from("[rpc]\n");
        for name in ["line_num", "line_den", "samp_num", "samp_den"] {
            let coeffs: Vec<String> = (0..20).map(|i| if i == 0 { "1.0".into() } else { "0.0".into() }).collect();
            text += &format!("{name} = [{}]\n", coeffs.join(", "));
        }
        text += "[rpc.offsets]\nlat = 1.0\nlon = 2.0\nheight = 3.0\nline = 4.0\nsamp = 5.0\n";
        text += "[rpc.scales]\nlat = 1.0\nlon = 1.0\nheight = 1.0\nline = 10.0\nsamp = 20.0\n";
        let file = CameraFile::from_toml_str(&text).unwrap();
        let rpc = file.rpc_camera().unwrap();
        let px = rpc.project(1.0, 2.0, 3.0).unwrap();
        assert_eq!((px.sample, px.line), (25.0, 14.0));
    }

    #[test]
    fn short_coefficient_list_is_rejected() {
        let text = "[rpc]\nline_num = [1.0, 2.0]\n";
        assert!(CameraFile::from_toml_str(text).is_err());
    }
}
