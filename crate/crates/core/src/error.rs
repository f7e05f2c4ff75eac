use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("failed to read mesh {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed mesh at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-triangle face with {0} corners")]
    NonTriangleFace(usize),
    #[error("mesh has zero vertices")]
    NoVertices,
    #[error("vertex index {index} out of range for {count} vertices")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("sphere phantom needs at least 12 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("dipole separation {0:e} m is below the singularity threshold")]
    Singularity(f64),
    #[error("invalid world parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("could not spawn the capsule inside the phantom after {0} attempts")]
    SpawnFailed(usize),
    #[error("episode already finished; call reset first")]
    EpisodeFinished,
    #[error("environment has not been reset")]
    NotReset,
    #[error("action has {got} components, expected {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("non-finite action {action:?} at step {step}")]
    NonFiniteAction { step: usize, action: Vec<f64> },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("record line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported record format tag {0:?}")]
    Format(String),
    #[error("record is empty")]
    Empty,
}
