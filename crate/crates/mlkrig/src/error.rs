use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParamDomain(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("design matrix is rank deficient: {deficient} of {p} columns are dependent{context}")]
    DegenerateDesign {
        deficient: usize,
        p: usize,
        context: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("leaf with {got} points cannot support {needed} trend columns")]
    InsufficientLeaf { got: usize, needed: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("iterative solver did not converge: {iterations} iterations, relative residual {residual:.3e} > tol {tol:.3e}")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("condition number estimate unavailable: {0}")]
    ConditionUnavailable(String),

    #[error("covariance parameter estimation failed: {0}")]
    EstimationFailed(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no rows left after exclusions: {0}")]
    EmptyMetric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
