use thiserror::Error;

pub type Result<T> = std::result::Result<T, AdgapError>;

#[derive(Debug, Error)]
pub enum AdgapError {
    #[error("{what} count {count} exceeds enumeration cap {cap}")]
    CapExceeded { what: &'static str, count: usize, cap: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("operation requires a {expected} graph, got {found}")]
    WrongKind { expected: &'static str, found: String },

    #[error("policy violation: {0}")]
    PolicyViolation(String),

    #[error("inconsistent realization: {0}")]
    Inconsistent(String),

    #[error("budget distribution mean {0} is not an integer")]
    NonIntegerMean(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AdgapError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AdgapError::InvalidParams(msg.into())
    }
}
