use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("scenario violates assumptions: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("region has no free cells")]
    EmptyRegion,
    #[error("no path: {0}")]
    NoPath(String),
    #[error("planner failed: {0}")]
    PlannerFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
