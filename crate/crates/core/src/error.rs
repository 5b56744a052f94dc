use thiserror::Error;

/// Errors produced by the recommendation pipeline.
#[derive(Debug, Error)]
pub enum GprError {
    /// A precondition on the inputs does not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A loss or intermediate value stopped being finite.
    #[error("numerical failure in {component}: {detail}")]
    NumericalFailure { component: String, detail: String },

    /// Decoding reached a prefix that has no legal continuation.
    #[error("decode failure: prefix {prefix:?} has no legal continuation")]
    DecodeFailure { prefix: Vec<u32> },

    /// A persisted artifact is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GprError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GprError::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(component: impl Into<String>, detail: impl Into<String>) -> Self {
        GprError::NumericalFailure {
            component: component.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, GprError>;
