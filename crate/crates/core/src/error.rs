use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Duplicate identifiers or keys where uniqueness is required.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("bucket id {id} out of range for vocabulary of {limit}")]
    Bounds { id: usize, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("no teacher score for query {qid}, document {doc_id}")]
    Lookup { qid: String, doc_id: String },

    #[error("unknown document id {0}")]
    UnknownDocument(String),

    #[error("stale index: built from params version {index}, student is at {params}")]
    StaleIndex { index: u64, params: u64 },

    #[error("bad checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Whether the error came from arithmetic blowing up rather than from bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}
