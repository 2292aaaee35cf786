use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level {level} is outside a basis of dimension {dim}")]
    OutOfBasis { level: usize, dim: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error(
        "truncation leakage {leakage:.3e} exceeds tolerance {tolerance:.1e}; \
         dimension must be at least {required_dim}"
    )]
    Truncation {
        leakage: f64,
        tolerance: f64,
        required_dim: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension {dim} exceeds the superoperator guard of {max}")]
    Oversize { dim: usize, max: usize },

    #[error("step size guard violated: dt * jump rate = {value:.3e} > {limit}")]
    StepSize { value: f64, limit: f64 },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
