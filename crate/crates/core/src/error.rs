use thiserror::Error;

/// Errors raised by the numerical routines and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pooling filter is not invertible: min |m~_t| = {min_abs:e} <= {threshold:e}")]
    NonInvertiblePooling { min_abs: f64, threshold: f64 },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("training diverged at step {step}: loss {loss:e}")]
    Diverged { step: usize, loss: f64 },

    #[error("domain is not translationally unique: sample {first} equals sample {second} shifted by {shift}")]
    NotTranslationallyUnique {
        first: usize,
        second: usize,
        shift: usize,
    },

    #[error("negative input coordinate {value:e} at sample {sample}; shift the domain by at least {recommended_shift:e} first")]
    NegativeDomain {
        sample: usize,
        value: f64,
        recommended_shift: f64,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Validation-class errors map to CLI exit code 1, everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::InvalidArgument(_)
                | Error::NonInvertiblePooling { .. }
                | Error::NotTranslationallyUnique { .. }
                | Error::NegativeDomain { .. }
                | Error::Hypothesis(_)
                | Error::Format(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
