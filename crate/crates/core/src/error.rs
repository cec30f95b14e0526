use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// The support window captures too little of the discrete Gaussian.
    #[error("support window captures mass {captured:.3e} short of 1 (limit {limit:.1e})")]
    Truncation { captured: f64, limit: f64 },

    #[error("coset {coset} at level {level} carries no probability mass")]
    EmptyCoset { level: usize, coset: u32 },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("block length {0} is not a power of two")]
    Size(usize),

    #[error("infeasible rate target {target} at level {level}")]
    InfeasibleRate { level: usize, target: f64 },

    #[error("schema version mismatch: found {found:?}, expected {expected:?}")]
    Version { found: String, expected: String },

    #[error("content hash mismatch: stored {stored}, computed {computed}")]
    Hash { stored: String, computed: String },

    #[error("malformed bitstream: {0}")]
    Bitstream(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleRate { .. } | Error::Truncation { .. } | Error::EmptyCoset { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
