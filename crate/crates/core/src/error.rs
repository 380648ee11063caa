use thiserror::Error;

/// Errors produced by kernels, functionals, losses and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// The kernel or representation cannot evaluate the requested operator.
    #[error("unsupported capability: {0}")]
    Capability(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("method not applicable: {0}")]
    InvalidMethod(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("no convergence: {0}")]
    Convergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
