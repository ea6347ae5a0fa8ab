//! Crate-wide error type.

/// Errors produced by any operation in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    /// A text input (fixture, config) failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Configuration key rejected (unknown key, bad value, violated constraint).
    #[error("config error: `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// Matrix or batch widths do not line up.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A NaN or infinity appeared where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Sinkhorn scaling produced a non-finite intermediate even in the
    /// log-domain path; the regularization weight is too small for the
    /// cost scale.
    #[error("sinkhorn diverged: {0}; retry with a larger lambda")]
    SinkhornDiverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
