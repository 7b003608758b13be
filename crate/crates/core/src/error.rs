use thiserror::Error;

/// Errors raised by the numerical constructions.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the domain of an operation (grid mismatch, degenerate box, -inf input, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// An input violates a structural invariant; `node` points at the worst offender when known.
    #[error("validation failed: {message}")]
    Validation { message: String, node: Option<usize> },
    /// A configured size cap would be exceeded.
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
