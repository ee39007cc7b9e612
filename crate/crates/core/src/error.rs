use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch for record `{id}`: expected {expected}, found {found}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("record `{0}` has no gradient")]
    MissingGradient(String),

    #[error("record `{0}` has no probability")]
    MissingProb(String),

    #[error("cannot serialize record `{id}`: {message}")]
    Serialize { id: String, message: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("all {total} CAVs scored below min_separator_accuracy {threshold}; lower min_separator_accuracy")]
    AllCavsFiltered { total: usize, threshold: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
