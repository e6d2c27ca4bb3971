use std::path::PathBuf;

use thiserror::Error;

/// Which factor block a linear solve belonged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    User,
    Item,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::User => f.write_str("user"),
            Side::Item => f.write_str("item"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset is empty after loading/filtering: {0}")]
    EmptyDataset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear system for {side} {index} is not positive definite")]
    Singular { side: Side, index: usize },

    #[error("non-finite factor value after sweep {sweep} ({side} {index})")]
    NonFinite {
        sweep: usize,
        side: Side,
        index: usize,
    },

    #[error("sparsity is undefined for {0} items (need at least 2)")]
    UndefinedSparsity(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable tag for this error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidMatrix(_) => "invalid_matrix",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Singular { .. } => "singular_system",
            Error::NonFinite { .. } => "non_finite",
            Error::UndefinedSparsity(_) => "undefined_sparsity",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
