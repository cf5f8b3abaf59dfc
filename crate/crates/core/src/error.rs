use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input is empty: {0}")]
    InputEmpty(String),

    #[error("input too short: {0}")]
    InputTooShort(String),

    #[error("input too small: {0}")]
    InputTooSmall(String),

    #[error("discount factor {0} must lie in [0, 1)")]
    DiscountOutOfRange(f64),

    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    VocabOutOfRange { id: usize, vocab_size: usize },

    #[error("target is not a probability distribution: {0}")]
    InvalidTarget(String),

    #[error("missing input {path}: {reason}")]
    MissingInput { path: PathBuf, reason: String },

    #[error("malformed data in {path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the CLI: 2 missing/invalid input, 3 malformed
    /// data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Malformed { .. } => 3,
            Error::NumericalFailure(_) => 4,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput {
                path,
                reason: source.to_string(),
            }
        } else {
            Error::Io { path, source }
        }
    }
}
