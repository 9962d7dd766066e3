use thiserror::Error;

#[derive(Debug, Error)]
pub enum CwpError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("count vector sums to {got}, expected {expected}")]
    CountMismatch { expected: usize, got: usize },

    #[error("enumeration needs {required} compositions, budget is {budget}")]
    CapacityExceeded { required: f64, budget: f64 },

    #[error("degenerate Hessian at {0}: the regression matrix is not invertible")]
    DegenerateHessian(String),

    #[error("need at least {required} samples, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error("region contains no count vector: {0}")]
    EmptyRegion(String),

    #[error("grid does not cover the density: {reason}; suggested bounds {suggested:?}")]
    InsufficientCoverage {
        reason: String,
        suggested: Vec<(f64, f64)>,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-positive value {0} in a log-log fit")]
    NonPositive(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CwpError>;
