use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::TapeError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid intervention: {0}")]
    Intervention(String),
    #[error("invalid circuit structure: {0}")]
    Structure(String),
    #[error("invalid circuit parameters: {0}")]
    Params(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("non-finite training loss at step {step}")]
    NonFiniteLoss {
        step: u64,
        /// `(t, model CF, ECF)` triples of the failing step.
        dump: Vec<(Vec<f64>, [f64; 2], [f64; 2])>,
    },
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
