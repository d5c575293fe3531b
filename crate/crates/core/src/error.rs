use thiserror::Error;

pub type Result<T> = std::result::Result<T, WdlError>;

#[derive(Debug, Error)]
pub enum WdlError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The base quantile function of a location-scale fit has zero variance.
    #[error("degenerate base quantile function (zero variance)")]
    DegenerateBase,

    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    /// R² is undefined when every observed quantile function is identical.
    #[error("R-squared undefined: outcome variance is zero (mean loss {mean_loss})")]
    UndefinedRSquared { mean_loss: f64 },

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WdlError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        WdlError::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(iteration: usize, msg: impl Into<String>) -> Self {
        WdlError::Numerical {
            iteration,
            message: msg.into(),
        }
    }
}
