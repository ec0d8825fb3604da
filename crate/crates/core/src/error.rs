use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    /// A numerical routine could not reach its requested accuracy.
    #[error("accuracy target not met: {what} (achieved error estimate {achieved:e}, requested {requested:e})")]
    Accuracy {
        what: String,
        achieved: f64,
        requested: f64,
    },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn weight(msg: impl Into<String>) -> Self {
        Error::InvalidWeight(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
