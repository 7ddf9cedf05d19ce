use alloc::string::String;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The requested step violates `dt <= eps / 10` and the override flag is off.
    #[error("stability guard: dt = {dt} exceeds eps/10 = {limit}")]
    StabilityViolation { dt: f64, limit: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    /// A study was refused because the model does not satisfy its hypotheses.
    #[error("hypothesis check failed: {0}")]
    HypothesisFailed(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
