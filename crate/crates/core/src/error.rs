use thiserror::Error;

/// Errors raised by estimators, the clustering objective, and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in input: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate cluster {cluster}: assignment column has no mass")]
    DegenerateCluster { cluster: usize },

    #[error("quadrature grid too coarse: density {index} integrates to {integral} (expected {expected})")]
    OracleResolution {
        index: usize,
        integral: f64,
        expected: f64,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
