use std::io;

use thiserror::Error;

/// Errors produced anywhere in the filter pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or lengths that must agree did not.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A precondition on an argument was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("user `{0}` is already registered")]
    DuplicateUser(String),

    #[error("the filter registry is empty")]
    EmptyRegistry,

    /// A malformed input file (IDX, CSV, params document).
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },

    /// A malformed or unexpected protocol message.
    #[error("protocol error ({code}): {detail}")]
    Protocol { code: String, detail: String },

    /// The remote service answered with an in-band error.
    #[error("remote error ({code}): {detail}")]
    Remote { code: String, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn protocol(code: &str, detail: impl Into<String>) -> Self {
        Error::Protocol {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    /// Stable short code used for in-band protocol errors.
    pub fn code(&self) -> &str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Contract(_) => "contract",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::DuplicateUser(_) => "duplicate_user",
            Error::EmptyRegistry => "empty_registry",
            Error::Format { .. } => "format",
            Error::Protocol { code, .. } => code,
            Error::Remote { code, .. } => code,
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
