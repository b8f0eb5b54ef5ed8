use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("zero-length vector has no direction")]
    ZeroVector,

    #[error("coincident points: elevation is undefined")]
    CoincidentPoints,

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("MTU must be positive, got {0} bytes")]
    InvalidMtu(i64),

    #[error("{0} requires a non-empty input")]
    Empty(&'static str),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}
