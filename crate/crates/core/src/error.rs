use std::path::PathBuf;

use afe_autograd::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AfeError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{}: no bodies in any frame", .0.display())]
    EmptyBody(PathBuf),

    #[error("invalid sequence: {0}")]
    Sequence(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config mismatch: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, AfeError>;

impl AfeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
