use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("source unavailable: {0}")]
    SourceUnavailable(String),

    #[error("auth error: HTTP {status}")]
    Auth { status: u16 },

    #[error("protocol error at offset {offset}: {message}")]
    Protocol { offset: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("feature width mismatch: model expects {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("corpus has {tokens} tokens, fewer than one window of {window}")]
    CorpusTooSmall { tokens: usize, window: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("label {label:?} has {count} instances, at least {required} required")]
    TooFewInstances {
        label: String,
        count: usize,
        required: usize,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
