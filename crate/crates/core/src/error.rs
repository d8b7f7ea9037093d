use thiserror::Error;

/// Errors raised by the market mechanisms, solvers and simulators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    /// Exact enumeration would visit more profiles than the guard allows.
    #[error("enumeration of {profiles} profiles exceeds the limit of {limit}; use the Monte Carlo estimator instead")]
    Capacity { profiles: f64, limit: f64 },

    /// The market belief and a report have disjoint support.
    #[error("inconsistent evidence: {0}")]
    Inconsistent(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
