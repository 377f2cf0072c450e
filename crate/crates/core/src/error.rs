use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by the mutation pipeline and the objective module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("degenerate polygon: {0} vertices (need at least 3)")]
    DegeneratePolygon(usize),

    #[error("no candidate objects: critical and non-critical sets are both empty")]
    NoCandidateObjects,

    #[error("no insertion site in question: {0:?}")]
    NoInsertionSite(String),

    #[error("word {word:?} not found in question {question:?}")]
    WordNotFound { word: String, question: String },

    #[error("no admissible substitution for {0:?} among top {1} candidates")]
    NoSubstitution(String, usize),

    #[error("token {0:?} has no embedding")]
    MissingEmbedding(String),

    #[error("unknown color name: {0:?}")]
    UnknownColor(String),

    #[error("answer {0:?} does not parse as a non-negative integer")]
    UnparseableNumber(String),

    #[error("cannot remove {m} instances: answer count is {n}")]
    RemovalExceedsCount { m: usize, n: usize },

    #[error("k = {k} exceeds the number of distinct vectors ({distinct})")]
    TooManyClusters { k: usize, distinct: usize },

    #[error("unknown question-type id: {0}")]
    UnknownTypeId(usize),

    #[error("degenerate projection: zero-norm vector (cosine undefined)")]
    DegenerateProjection,

    #[error("misaligned batches: {0}")]
    MisalignedBatches(String),

    #[error("non-finite value in {context}: {value}")]
    NonFinite { context: String, value: f64 },

    #[error("unsupported mutation kind for this operation: {0}")]
    UnsupportedKind(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("inpaint hook failed: {0}")]
    HookFailed(String),

    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("malformed {format} data: {message}")]
    Format { format: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn format(format: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            format: format.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
