use thiserror::Error;

use satrecon::camera::CameraError;
use satrecon::depth::DepthError;
use satrecon::eval::EvalError;
use satrecon::preprocess::PreprocessError;
use satrecon::raster::RasterError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Format(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io { path: path.as_ref().display().to_string(), source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
