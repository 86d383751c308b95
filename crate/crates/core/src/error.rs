use thiserror::Error;

/// Why a node sequence is not a permutation of an instance's nodes.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TourError {
    #[error("tour has {got} entries, instance has {expected} nodes")]
    WrongLength { expected: usize, got: usize },
    #[error("node index {index} is out of range for {n} nodes")]
    OutOfRange { index: usize, n: usize },
    #[error("node index {index} appears more than once")]
    Duplicate { index: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid tour: {0}")]
    InvalidTour(#[from] TourError),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("instance file line {line}: {msg}")]
    Format { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
