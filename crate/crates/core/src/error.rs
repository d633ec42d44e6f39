use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate series `{0}`: constant values")]
    DegenerateSeries(String),

    #[error("matrix is not positive definite (non-positive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical overflow at t = {t}")]
    Overflow { t: usize },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for failures raised while fitting or filtering a model, as opposed
    /// to problems with the input data.
    pub fn is_estimation_failure(&self) -> bool {
        matches!(self, Error::Estimation(_) | Error::Overflow { .. })
    }
}
