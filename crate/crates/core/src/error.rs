use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Ingest {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{0}: dataset is empty")]
    EmptyDataset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("examples with no in-vocabulary tokens: {0:?}")]
    NoVocabularyTokens(Vec<usize>),

    #[error("cosine distance is undefined for a zero-norm vector")]
    ZeroNorm,

    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("untrainable: no covered training example")]
    Untrainable,

    #[error("simulator requires gold labels (example {0} has none)")]
    MissingGold(usize),

    #[error("gold labels missing on {0} example(s) of the evaluated split")]
    MissingGoldOnSplit(usize),

    #[error("need at least {needed} train examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },

    #[error("empty split")]
    EmptySplit,

    #[error("session complete: candidate pool exhausted")]
    SessionComplete,

    #[error("a response for example {0} is pending")]
    PendingResponse(usize),

    #[error("no example is awaiting a response")]
    NoPendingExample,

    #[error("primitive {primitive:?} is not contained in example {example}")]
    PrimitiveNotInExample { primitive: String, example: usize },

    #[error("unknown primitive {0:?}")]
    UnknownPrimitive(String),

    #[error("snapshot error: {0}")]
    Snapshot(String),

    #[error(transparent)]
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
