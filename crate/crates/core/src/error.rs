use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: invalid `{field}`: {message}")]
    InvalidRecord {
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("invalid `{field}`: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("cannot parse chain-of-thought output {raw:?}: expected `connector -> l1 -> l2`")]
    CotParse { raw: String },

    #[error("template: {0}")]
    Template(String),

    #[error("backend: {message}")]
    Backend {
        message: String,
        #[source]
        cause: Option<Box<dyn std::error::Error + Send + Sync>>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            message: message.into(),
        }
    }

    pub(crate) fn backend(message: impl Into<String>) -> Self {
        Error::Backend {
            message: message.into(),
            cause: None,
        }
    }
}
