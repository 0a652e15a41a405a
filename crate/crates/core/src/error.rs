use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("grid resolution: {0}")]
    Resolution(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("time {time} outside domain [{start}, {end}]")]
    Domain { time: f64, start: f64, end: f64 },

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("divergent norm: {0}")]
    Divergent(String),

    #[error("non-finite state at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("insufficient budget: achieved standard error {achieved:.3e} exceeds target {target:.3e}")]
    Budget { achieved: f64, target: f64 },

    #[error("condition rejected: {0}")]
    Condition(String),

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
