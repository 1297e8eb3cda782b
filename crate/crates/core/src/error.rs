use thiserror::Error;

/// Errors raised by the simulator and the learning stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical instability after {step} steps: {detail}")]
    NumericalInstability { step: usize, detail: String },

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("resonance singularity at omega = {omega}")]
    ResonanceSingularity { omega: f64 },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
