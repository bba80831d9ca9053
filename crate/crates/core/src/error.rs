use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two operands disagree along the named axes.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument lies outside its documented domain.
    #[error("input error: {0}")]
    Input(String),

    /// An operation was called in the wrong order (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("consistency error: {0}")]
    Consistency(String),

    /// Exhaustive enumeration would exceed the supported size.
    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("undefined difficulty weight: {0}")]
    UndefinedWeight(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
