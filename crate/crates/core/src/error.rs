use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("qubit count mismatch: expected {expected}, found {found}")]
    QubitMismatch { expected: usize, found: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("{what} exceeds the resource cap ({requested} > {cap})")]
    ResourceCap {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("observable does not commute with generator {0}")]
    NotSymmetric(usize),

    #[error("sector has zero probability")]
    EmptySector,

    #[error("operator is parity odd")]
    ParityOdd,

    #[error("spectrum is singular: {0}")]
    SingularMode(String),

    #[error("gapless Hamiltonian: {0}")]
    Gapless(String),

    #[error("no crossing found in the scanned window")]
    NoCrossing,

    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
