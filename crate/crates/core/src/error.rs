use thiserror::Error;

/// Errors raised while building, evaluating or solving portfolio problems.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, got {actual}")]
    Dimension {
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(
        "factor covariance is not positive semidefinite (min eigenvalue {min_eigenvalue:e}, max {max_eigenvalue:e})"
    )]
    NotPsd { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("factor returns are rank deficient along factor {factor}")]
    RankDeficient { factor: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("decision dimension {dim} exceeds the grid oracle limit of {max}")]
    GridTooLarge { dim: usize, max: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u64, expected: u64 },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn dim(axis: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension { axis, expected, actual }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
