use thiserror::Error;

/// Errors raised by the decoding pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, floor {floor:e})")]
    NotPositiveDefinite { min_eigenvalue: f64, floor: f64 },

    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),

    #[error(
        "no stable gain-control design: every accuracy is at or below chance, or the stability mass is unreachable"
    )]
    NoStableDesign,

    #[error("format error: {0}")]
    Format(String),

    #[error("cross-validation protocol error: {0}")]
    Protocol(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
