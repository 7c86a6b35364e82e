//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing split file {0}")]
    MissingSplit(PathBuf),

    #[error("malformed record in {path} at line {line}: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("split `{0}` contains no documents")]
    EmptySplit(String),

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("corrupt store: {0}")]
    CorruptStore(String),

    #[error("{strategy} needs at least {required} token positions, got {actual}")]
    InsufficientTokens {
        strategy: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("unknown document `{0}`")]
    UnknownDocument(String),

    #[error("step {step} outside schedule range 0..={total}")]
    InvalidStep { step: usize, total: usize },

    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),

    #[error("shape mismatch: {0}")]
    ShapeError(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown aggregation strategy `{0}`")]
    UnknownStrategy(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name of the variant, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingSplit(_) => "MissingSplit",
            Error::MalformedRecord { .. } => "MalformedRecord",
            Error::EmptySplit(_) => "EmptySplit",
            Error::DuplicateId(_) => "DuplicateId",
            Error::EmptyInput(_) => "EmptyInput",
            Error::CorruptStore(_) => "CorruptStore",
            Error::InsufficientTokens { .. } => "InsufficientTokens",
            Error::UnknownDocument(_) => "UnknownDocument",
            Error::InvalidStep { .. } => "InvalidStep",
            Error::NonFiniteGradient(_) => "NonFiniteGradient",
            Error::ShapeError(_) => "ShapeError",
            Error::UndefinedMetric(_) => "UndefinedMetric",
            Error::NonFinite(_) => "NonFinite",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::UnknownStrategy(_) => "UnknownStrategy",
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => "NotFound",
            Error::Io { .. } => "Io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
