use std::path::PathBuf;

use capscan_core::error::EnvError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} at update {update}")]
    NonFinite { what: String, update: u64 },
    #[error("environment failed at env step {step}: {source}")]
    Env {
        step: u64,
        #[source]
        source: EnvError,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LearnError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LearnError::Io {
            path: path.into(),
            source,
        }
    }
}
