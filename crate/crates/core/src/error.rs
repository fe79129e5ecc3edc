use thiserror::Error;

/// Errors raised by the simulation and numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("quadrant function undefined at the corner u = v = 0")]
    UndefinedAtCorner,
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error("monotonicity violation: {0}")]
    MonotonicityViolation(String),
    #[error("calibration failure: {0}")]
    CalibrationFailure(String),
    #[error("unsupported start: {0}")]
    UnsupportedStart(String),
    #[error("incomplete path: {0}")]
    IncompletePath(String),
    #[error("non-termination: {0}")]
    NonTermination(String),
}

impl Error {
    /// True for the numerical failure family (non-finite values, quadrature).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericFailure(_) | Error::QuadratureFailure(_) | Error::MonotonicityViolation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
