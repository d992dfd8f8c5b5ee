use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::PairLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no eligible response in pool: {0}")]
    EmptyPool(String),

    #[error("training data must contain all three classes, missing: {0:?}")]
    MissingClasses(Vec<PairLabel>),

    #[error("class `{0}` is empty after confidence filtering")]
    EmptyClass(PairLabel),

    #[error("infiller has no trained MLM head")]
    UntrainedInfiller,

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("non-finite value in parameter block `{0}`")]
    NonFinite(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
