use thiserror::Error;

/// Errors surfaced by the library. Variants mirror the failure classes of the
/// public operations: bad parameters, domain violations, broken caller
/// contracts, capacity limits of exact algorithms, and numeric breakdowns.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {message}")]
    Parameter { name: &'static str, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    #[error("degenerate Gramian: {0}")]
    Degenerate(String),

    #[error("divergence at node {node}: {message}")]
    Diverged { node: usize, message: String },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parameter(name: &'static str, message: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
