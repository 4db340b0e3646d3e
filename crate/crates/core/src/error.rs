use thiserror::Error;

use crate::factor::CheckResult;

pub type Result<T> = std::result::Result<T, McmaError>;

#[derive(Debug, Error)]
pub enum McmaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate weights: normalising constant is zero for row {row}")]
    DegenerateWeights { row: usize },

    #[error("latent dimension {k} must be smaller than the number of bias domains {d}")]
    RankError { k: usize, d: usize },

    #[error("posterior precision matrix is numerically singular")]
    SingularMatrix,

    #[error("correlation screening left {kept} column(s); at least 2 are required")]
    AllDropped { kept: usize },

    #[error("predictive check failed (score {:.4} <= 0.5); rerun with --force to override", .0.score)]
    CheckFailed(CheckResult),

    #[error("metric undefined: {0}")]
    DegenerateLabels(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl McmaError {
    /// True for errors caused by the content of input data rather than by how
    /// the program was invoked.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            McmaError::InvalidArgument(_) | McmaError::CheckFailed(_)
        )
    }
}
