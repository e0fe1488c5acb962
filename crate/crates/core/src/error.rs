use thiserror::Error;

/// Errors raised by the planning toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Queue parameters with an arrival rate at or above the service rate.
    #[error("unstable queue: arrival rate {lambda} must be below service rate {mu}")]
    Unstable { lambda: f64, mu: f64 },

    /// Arrival and service rates too close for the closed-form AoI expression.
    #[error("singular queue: |lambda - mu| = {gap:e} is within the 1e-9 guard")]
    Singular { gap: f64 },

    /// The P1 wake-up constraint `gamma_wake <= gamma_cap` is violated.
    #[error("constraint violated: gamma_wake {gamma_wake} exceeds cap {gamma_cap}")]
    Constraint { gamma_wake: f64, gamma_cap: f64 },

    /// Surrogate fitting failed (non positive definite kernel, duplicate inputs, ...).
    #[error("fit error: {0}")]
    Fit(String),

    /// A model was used before being fitted.
    #[error("state error: {0}")]
    State(String),

    /// Neural network training diverged.
    #[error("training error: {0}")]
    Training(String),

    /// Snapshot (de)serialization failed.
    #[error("snapshot error: {0}")]
    Snapshot(String),

    /// A numerical invariant was broken beyond its tolerance.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
