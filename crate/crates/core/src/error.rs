use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or batch shapes disagree.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// Invalid hyper-parameter or experiment setting.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad caller-supplied data (labels out of range, empty sets, missing matrix entries).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("truncated file {path}: header declares {declared} bytes of payload, found {found}")]
    Truncated {
        path: PathBuf,
        declared: usize,
        found: usize,
    },

    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    Inconsistent { images: usize, labels: usize },

    #[error("no results found in {0}")]
    NoResults(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
