use thiserror::Error;

/// Errors raised across the estimation and evaluation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("zero sparsity: residual quantiles do not separate")]
    ZeroSparsity,

    #[error("incompatible fits: {0}")]
    Incompatible(String),

    #[error("cannot rescale: innovation quantile is zero")]
    ZeroQuantile,

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("{path}:{line}: {msg}")]
    Data {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
