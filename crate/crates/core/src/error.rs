use thiserror::Error;

/// Errors raised by the solver, the scale-function evaluators and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation (negative Laplace argument, x <= 0 for a derivative, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A modelling assumption required by the solver does not hold.
    #[error("assumption `{name}` violated: {reason}")]
    Assumption { name: String, reason: String },

    /// Root bracketing, Laplace inversion or a fixed-point iteration failed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The requested operation is not available for this model family.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("simulation fault on path {path}: {reason}")]
    Simulation { path: usize, reason: String },
}

impl Error {
    pub(crate) fn assumption(name: &str, reason: impl Into<String>) -> Self {
        Error::Assumption {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
