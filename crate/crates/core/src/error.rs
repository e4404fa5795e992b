//! Error type for fallible domain operations.
//!
//! Engine-level misuse (shape mismatches, out-of-range axes, malformed
//! primitive arguments) panics with the primitive name and offending shapes;
//! everything that can fail due to data or configuration returns `RoseError`.

#[derive(Debug, thiserror::Error)]
pub enum RoseError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// Configuration file or CLI parameter problems.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed on-disk artifacts (PPM/PFM/PGM, checkpoints, manifests).
    #[error("format error: {0}")]
    Format(String),
    /// Precondition violations in domain operations (empty masks, bad sizes).
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Failures raised while training (collapse guard, divergence, frozen-weight audit).
    #[error("training error: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, RoseError>;

impl RoseError {
    pub fn config(msg: impl Into<String>) -> Self {
        RoseError::Config(msg.into())
    }
    pub fn format(msg: impl Into<String>) -> Self {
        RoseError::Format(msg.into())
    }
    pub fn invalid(msg: impl Into<String>) -> Self {
        RoseError::Invalid(msg.into())
    }
    pub fn training(msg: impl Into<String>) -> Self {
        RoseError::Training(msg.into())
    }
}
