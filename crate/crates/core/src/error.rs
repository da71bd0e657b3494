use alloc::string::String;
use core::fmt;

/// Errors produced by the estimators, geometry and oracles.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A data value was rejected (non-finite, empty batch, ...).
    InvalidInput(String),
    /// A tuning or construction parameter is out of range.
    InvalidParameter(String),
    /// Point or vector dimension does not match the model.
    DimensionMismatch { expected: usize, found: usize },
    /// The operation is not valid in the current state (e.g. during warm-up).
    InvalidState(String),
    /// A model could not be built (non positive-definite covariance, ...).
    Model(String),
    /// A documented precondition of the call does not hold.
    Precondition(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::InvalidState(msg) => write!(f, "invalid state: {msg}"),
            Error::Model(msg) => write!(f, "model error: {msg}"),
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("non-finite value in observation".into()))
    }
}
