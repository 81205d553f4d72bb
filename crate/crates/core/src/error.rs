use std::path::PathBuf;

use thiserror::Error;

/// Diagnostics attached to a failed maximum-likelihood fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub last_shape: f64,
    pub sample_size: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    /// The caller violated a precondition (bad dimension, out-of-range parameter).
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data could not be parsed or violates a dataset invariant.
    #[error("data error: {0}")]
    Data(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    /// A statistical fit could not be carried out.
    #[error("fit failure: {message}")]
    Fit {
        message: String,
        diagnostics: Option<FitDiagnostics>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("model file error: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn fit(msg: impl Into<String>) -> Self {
        Error::Fit {
            message: msg.into(),
            diagnostics: None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
