use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("operation requires case {expected}, hypothesis classifies as {found}")]
    WrongCase {
        expected: &'static str,
        found: &'static str,
    },

    #[error("table is empty")]
    EmptyTable,

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("need at least {needed} usable points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite energy at iteration {iteration}")]
    NonFiniteEnergy { iteration: usize, iterate: Vec<f64> },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
