use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// A vector that must be nonzero (for cosine similarity) had zero norm.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("class {class_id} has {size} member(s); an affinity group needs at least 2")]
    GroupTooSmall { class_id: usize, size: usize },

    #[error("need at least 2 values to fit a mixture, got {0}")]
    TooFewSamples(usize),

    #[error("round {round}: every class produced an empty clean set")]
    EmptyCleanSet { round: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
