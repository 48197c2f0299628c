use thiserror::Error;

/// Errors raised by the graph, kernel and learner routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter `{name}`: {msg}")]
    InvalidParameter { name: &'static str, msg: String },

    #[error("operation requires an undirected graph")]
    DirectedGraph,

    #[error("invalid label {0} for a classification loss (expected -1 or +1)")]
    InvalidLabel(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("kNN inapplicable: node {0} has no labeled neighbor")]
    KnnInapplicable(usize),

    #[error("no collision available: spectral matrix has full column rank")]
    NoCollision,

    #[error("malformed serialized data: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, msg: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        msg: msg.into(),
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
