use thiserror::Error;

/// Errors produced by the library.
///
/// The variants follow the failure classes the CLI maps onto exit codes:
/// usage/config problems, domain violations, and numerical breakdowns.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A computation produced NaN or infinity.
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    /// An argument lies outside the set on which the operation is defined.
    #[error("{what} = {value:e} outside its domain [{lo:e}, {hi:e}]")]
    Domain {
        what: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// Invalid argument or violated precondition.
    #[error("invalid argument: {0}")]
    Usage(String),

    /// Incomplete or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The problem has no admissible solution.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// A linear system was numerically singular.
    #[error("singular linear system ({0})")]
    Singular(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(what: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Error::Domain {
            what: what.into(),
            value,
            lo,
            hi,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
