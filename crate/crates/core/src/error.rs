use thiserror::Error;

use crate::manipulate::ManipulationTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix must be column-centered")]
    NotCentered,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid RBF bandwidth {0} (must be > 0)")]
    InvalidBandwidth(f64),

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("subset fraction rho = {0} outside (0, 1)")]
    InvalidRho(f64),

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error("no direction orthogonal to the hyperplane normal exists in dimension 1")]
    NoOrthogonalDirection,

    #[error("no invertible matrix after {attempts} draws (mu = {mu}, sigma = {sigma})")]
    InvertibilityFailure {
        attempts: usize,
        mu: f64,
        sigma: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("optimizer stalled after {} iterations", trace.records.len())]
    Stalled { trace: Box<ManipulationTrace> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
