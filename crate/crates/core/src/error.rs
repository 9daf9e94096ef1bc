//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid boundary tagging: {0}")]
    InvalidTagging(String),

    #[error("boundary tag {0} not present in mesh")]
    InvalidTag(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("iterative solver did not converge: {iterations} iterations, relative residual {residual:e}")]
    CgNoConvergence { iterations: usize, residual: f64 },

    #[error(
        "fixed-point iteration did not converge: {iterations} sweeps, update norm {residual:e}"
    )]
    PicardNoConvergence { iterations: usize, residual: f64 },

    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
