use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the scan2map library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rotation angle {angle} rad is too close to pi for a unique logarithm")]
    BranchAmbiguity { angle: f64 },

    #[error("spatial index is empty")]
    EmptyIndex,

    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("map is empty")]
    EmptyMap,

    #[error("reference cloud is empty")]
    EmptyReference,

    #[error("input is empty")]
    EmptyInput,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("no reference points inside the evaluation window; change ratio is undefined")]
    UndefinedRatio,

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
