use std::fmt;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("architecture grammar error at position {position}: {message}")]
    Grammar { position: usize, message: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (learning rate {lr:e})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            context: context.to_string(),
            source,
        }
    }

    /// True for errors caused by bad input data or configuration, as opposed
    /// to failures while running.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parameter(_)
                | Error::Domain(_)
                | Error::Config(_)
                | Error::Validation(_)
                | Error::Shape(_)
                | Error::Parse { .. }
                | Error::Format(_)
                | Error::Grammar { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
