use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("shot {index}: {source}")]
    AtShot {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("states are indistinguishable: ground and excited centroids coincide")]
    CoincidentCentroids,

    #[error("dataset error: {0}")]
    Data(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("noise calibration cannot reach target fidelity {target}: {reason}")]
    Unreachable { target: f64, reason: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("constant measured curve: coefficient of determination is undefined")]
    ConstantCurve,

    #[error("time grids differ between curves")]
    GridMismatch,

    #[error("not enough Rabi traces: requested {requested}, available {available}")]
    NotEnoughTraces { requested: usize, available: usize },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// The innermost error, looking through shot-index wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtShot { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_shot(index: usize, source: Error) -> Self {
        Error::AtShot {
            index,
            source: Box::new(source),
        }
    }
}
