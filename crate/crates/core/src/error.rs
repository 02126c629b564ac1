use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("motion profile ends at {profile_end_ns} ns but the response extends to {required_ns} ns")]
    ProfileTooShort { profile_end_ns: f64, required_ns: f64 },

    #[error("quadrature did not converge: relative change {change:e} at order {order} (cap {cap})")]
    Quadrature { order: usize, cap: usize, change: f64 },

    #[error("every bin of the enhancement trace is masked")]
    AllMasked,

    #[error("event outside fill pattern: {0}")]
    Event(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("fit did not converge after {iterations} iterations (best objective {best_objective:e})")]
    FitNotConverged { iterations: usize, best_objective: f64, best_parameters: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
