//! Error type shared by all modules of the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type.
///
/// Variants distinguish between malformed inputs (caller bugs), violated
/// mathematical preconditions (the requested operation is not defined for the
/// given data) and numerical failures (an algorithm did not converge).
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Malformed problem data: dimension mismatch, non-finite entries,
    /// invalid configuration values.
    #[error("invalid input: {0}")]
    Spec(String),

    /// An eigenvalue / factorisation routine failed to converge or produced
    /// non-finite output.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A Schur complement was requested with respect to a singular block.
    #[error("singular trailing block: {0}")]
    SingularBlock(String),

    /// The supply rate is singular, so its dual does not exist.
    #[error("singular supply rate: {0}")]
    SingularSupply(String),

    /// A standing assumption required by the operation does not hold for the
    /// given data (e.g. a noise model that is unbounded or has empty
    /// interior).
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// The operation is not defined for the given input (e.g. a frequency
    /// norm of an unstable system, or a counterexample request when the rank
    /// condition holds).
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Recorded data is inconsistent with the declared noise model.
    #[error("data inconsistent with noise model: {0}")]
    DataInconsistent(String),

    /// A sampling routine accepted too few candidates to be meaningful.
    #[error("sampling starved: accepted {accepted} of {attempted} candidates ({context})")]
    SamplingStarved {
        accepted: usize,
        attempted: usize,
        context: String,
    },

    /// An iterative procedure exhausted its budget without reaching a
    /// decision.
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

impl Error {
    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
