use thiserror::Error;

pub type Result<T, E = IracError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IracError {
    /// One entry per violated invariant.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IracError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        IracError::Domain(msg.into())
    }
}
