use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("feature norm {norm} exceeds 1 (tolerance {tol})")]
    FeatureNorm { norm: f64, tol: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid MDP spec: {0}")]
    InvalidSpec(String),

    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("runtime invariant violated: {0}")]
    InvariantViolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 config, 2 runtime invariant, 3 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidSpec(_) | Error::Json(_) => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}
