//! Camera models and calibration-matrix algebra.
//!
//! Two sensor models live here: the finite projective camera ([`FpcCamera`]),
//! a pinhole model whose calibration matrix may carry a skew entry, and the
//! rational polynomial camera ([`RpcCamera`]) that satellite vendors ship in
//! image metadata. The FPC side also provides the decomposition
//! `K_p = T_{s->p} * K_s` that trades the skew entry for a translation-free
//! pixel-domain shear, so skew-free tools can consume the reconstruction.

mod fpc;
mod io;
mod rpc;
mod utm;

pub use fpc::{
    decompose_skew, fpc_invert, fpc_project, transform_between, FpcCamera, FpcIntrinsics,
    SkewDecomposition, PROJECTABLE_DEPTH_EPS,
};
pub use io::{read_camera_file, write_camera_file, CameraFile, FpcRecord, RpcRecord};
pub use rpc::{rpc_project, RpcCamera, RpcNormalization, RpcPixel, RPC_SINGULAR_EPS};
pub use utm::{geodetic_to_utm, utm_to_geodetic, Hemisphere};

use thiserror::Error;

/// Errors raised by camera construction and projection.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation is not orthonormal (max deviation {0:e})")]
    NonOrthonormalRotation(f64),
    #[error("point is not in front of the camera (depth {0:e})")]
    NotProjectable(f64),
    #[error("invalid RPC model: {0}")]
    InvalidRpc(String),
    #[error("RPC denominator vanishes ({0:e})")]
    SingularRpc(f64),
    #[error("invalid UTM input: {0}")]
    InvalidUtm(String),
    #[error("camera file: {0}")]
    File(String),
}

/// Max-absolute-entry norm of a matrix, used for all tolerance statements.
pub fn max_abs<R, C, S>(m: &nalgebra::Matrix<f64, R, C, S>) -> f64
where
    R: nalgebra::Dim,
    C: nalgebra::Dim,
    S: nalgebra::RawStorage<f64, R, C>,
{
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
