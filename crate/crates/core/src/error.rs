use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed binary or text input; `offset` is the byte position where decoding failed.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// Malformed line in a line-oriented file (qrels, run, config).
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("missing embeddings for ids: {}", .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A computation whose result is undefined for the given input.
    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("run and qrels share no query ids")]
    NoCommonQueries,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
