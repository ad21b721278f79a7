use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the prediction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("did not converge after {0} sweeps")]
    Convergence(usize),

    #[error("training loss diverged at epoch {0}")]
    Diverged(usize),

    #[error("point ({lon}, {lat}) lies outside the grid extent")]
    OutOfBounds { lon: f64, lat: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
