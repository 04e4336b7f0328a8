use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {reason}")]
    Load { row: usize, reason: String },

    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("instance {0} is an outlier")]
    Outlier(usize),

    #[error("degenerate clustering at epoch {epoch}: no reliable cluster survived")]
    DegenerateClustering { epoch: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("no query has a valid cross-camera match in the gallery")]
    NoValidQuery,

    #[error("bad {what} file: {reason}")]
    Format { what: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
