use thiserror::Error;

/// Errors produced by tensor construction, solvers and model training.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotSpd { row: usize, pivot: f64 },

    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("latent dimension mismatch: base model has k={base}, requested k={requested}")]
    KMismatch { base: usize, requested: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing column '{0}' in input")]
    MissingColumn(String),

    #[error("invalid model file: {0}")]
    InvalidModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
