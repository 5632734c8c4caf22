use std::path::PathBuf;

use scs_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScsError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("missing gradient for trainable parameter `{0}`")]
    MissingGradient(String),
}

pub type Result<T, E = ScsError> = std::result::Result<T, E>;

impl ScsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ScsError::Io {
            path: path.into(),
            source,
        }
    }
}
