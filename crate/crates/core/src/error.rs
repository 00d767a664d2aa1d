use thiserror::Error;

/// Errors raised by the monotonicity test and its supporting routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A Monte Carlo estimate was requested from zero draws.
    #[error("empty draw collection")]
    EmptyDraws,
    /// The data are degenerate for the requested computation.
    #[error("degenerate data: {0}")]
    Degenerate(String),
    /// Input text could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
