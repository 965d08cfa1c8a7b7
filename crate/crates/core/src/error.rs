use thiserror::Error;

pub type Result<T> = std::result::Result<T, GaugeError>;

#[derive(Debug, Error)]
pub enum GaugeError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is singular")]
    Singular,

    #[error("instance generation failed after {0} attempts")]
    ResampleLimit(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GaugeError {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        GaugeError::Dimension {
            context,
            expected,
            got,
        }
    }
}

/// Returns a dimension error unless `got == expected`.
pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(GaugeError::dim(context, expected, got))
    }
}
