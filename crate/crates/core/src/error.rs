use thiserror::Error;

pub type Result<T> = std::result::Result<T, ConfineError>;

#[derive(Debug, Error)]
pub enum ConfineError {
    /// An iterated logarithm was requested outside its admitted range.
    #[error("L_{level} is undefined at s = {s} (requires s >= {min_s})")]
    Domain { level: u32, s: f64, min_s: f64 },

    /// Levels whose domain underflows every binary float.
    #[error("iterated-log level {level} is beyond the representable hierarchy (max level 4)")]
    Capability { level: u32 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integration failed at s = {s}: {reason}")]
    Integration { s: f64, reason: String },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("no eigenvalue bracket found in E window [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },

    #[error("verdict is not monotone in the parameter: {0}")]
    NonMonotone(String),

    #[error("point lies outside the domain: {0}")]
    OutsideDomain(String),

    #[error("invalid configuration at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ConfineError {
    pub(crate) fn pre(msg: impl Into<String>) -> Self {
        ConfineError::Precondition(msg.into())
    }
}
