use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MixError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A component's total responsibility fell below the usable threshold.
    #[error("empty cluster{} (total responsibility {weight:e})", component.map(|k| format!(" {k}")).unwrap_or_default())]
    EmptyCluster { component: Option<usize>, weight: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, MixError>;

pub(crate) fn invalid(msg: impl Into<String>) -> MixError {
    MixError::InvalidArgument(msg.into())
}
