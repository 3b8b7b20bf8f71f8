use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative drift interval {0}")]
    NegativeDrift(f64),

    #[error("atom mass must be strictly positive, got {0}")]
    NonPositiveMass(f64),

    #[error("cannot remove {requested} units from a measure of total mass {available}")]
    InsufficientMass { requested: f64, available: f64 },

    #[error("customer stream is not strictly increasing in arrival time at index {0}")]
    UnsortedStream(u64),

    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),

    #[error("operation requires {expected} but the trajectory was produced by {found}")]
    ModeMismatch { expected: &'static str, found: String },

    #[error("trajectory lacks {0}")]
    MissingData(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("internal identity violated: {0}")]
    IdentityViolated(String),
}

pub type Result<T> = std::result::Result<T, Error>;
