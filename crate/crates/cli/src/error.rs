//! Command-level error type carrying the process exit code.

use dissipacert_core::Error as CoreError;

/// Exit codes forming the stable contract of the binary.
pub mod exit {
    /// Verdict: informative (or: verification passed).
    pub const INFORMATIVE: i32 = 0;
    /// Verdict: not informative.
    pub const NOT_INFORMATIVE: i32 = 1;
    /// Verdict: inconclusive, or a standing assumption fails for the input.
    pub const NO_VERDICT: i32 = 2;
    /// Unusable input: unreadable files, parse errors, dimension mismatches,
    /// bad flags.
    pub const USAGE: i32 = 64;
    /// Certificate was produced for different problem files.
    pub const HASH_MISMATCH: i32 = 65;
    /// Certificate contents fail re-validation (tampered or corrupt).
    pub const CERT_INVALID: i32 = 66;
    /// Internal numerical failure.
    pub const INTERNAL: i32 = 70;
}

/// Errors produced by the commands, each mapped to one exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("problem hash mismatch: {0}")]
    HashMismatch(String),
    #[error("certificate invalid: {0}")]
    CertificateInvalid(String),
    #[error("no verdict: {0}")]
    NoVerdict(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::HashMismatch(_) => exit::HASH_MISMATCH,
            CliError::CertificateInvalid(_) => exit::CERT_INVALID,
            CliError::NoVerdict(_) => exit::NO_VERDICT,
            CliError::Internal(_) => exit::INTERNAL,
        }
    }

    /// Wraps an input-file problem (unreadable, unparsable, bad dims).
    pub fn usage(context: &str, detail: impl std::fmt::Display) -> Self {
        CliError::Usage(format!("{context}: {detail}"))
    }
}

/// Maps a library error to the exit-code taxonomy: malformed problem data is
/// a usage error, violated mathematical preconditions leave the run without
/// a verdict, and numerical breakdowns are internal failures.
pub fn from_core(e: CoreError) -> CliError {
    match e {
        CoreError::Spec(_) => CliError::Usage(e.to_string()),
        CoreError::Assumption(_)
        | CoreError::NotApplicable(_)
        | CoreError::DataInconsistent(_)
        | CoreError::SingularSupply(_)
        | CoreError::Inconclusive(_) => CliError::NoVerdict(e.to_string()),
        CoreError::Numerical(_)
        | CoreError::SingularBlock(_)
        | CoreError::SamplingStarved { .. } => CliError::Internal(e.to_string()),
    }
}
