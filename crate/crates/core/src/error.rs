use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MtvError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not invertible: {0}")]
    Singular(String),
    #[error("element is not regular: {0}")]
    NotRegular(String),
    #[error("slice points differ across factors (A0 level set violated): {0}")]
    LevelSet(String),
    #[error("signature mismatch: {0}")]
    Signature(String),
    #[error("moment maps do not match for gluing: {0}")]
    Gluing(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("invalid permutation: {0}")]
    Permutation(String),
    #[error("degenerate jet data: {0}")]
    Degenerate(String),
    #[error("ill-conditioned spectral data: {0}")]
    Conditioning(String),
    #[error("invalid scheme: {0}")]
    Validation(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("finite-difference step too small: {0}")]
    StepUnderflow(f64),
}

pub type Result<T> = std::result::Result<T, MtvError>;
