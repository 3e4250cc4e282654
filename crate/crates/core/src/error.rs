use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("matrix is not square: {0} x {1}")]
    NotSquare(usize, usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("eigensolver did not converge (stalled at index {index})")]
    EigenNoConvergence { index: usize },

    #[error("weight matrix is not symmetric (|a_uv - a_vu| = {0:e})")]
    AsymmetricWeights(f64),

    #[error("weight matrix has a negative entry at ({0}, {1})")]
    NegativeWeight(usize, usize),

    #[error("weight matrix has a nonzero diagonal entry at {0}")]
    NonzeroDiagonal(usize),

    #[error("operator is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("zero kernel has no support")]
    ZeroKernel,

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("packing construction failed: {0}")]
    PackingFailed(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
