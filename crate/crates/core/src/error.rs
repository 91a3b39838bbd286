use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid basis label: {0}")]
    InvalidLabel(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The objective evaluated to NaN or infinity. Carries the offending
    /// decision vector so the pulse can be inspected.
    #[error("non-finite objective ({value}) at pulse of {} samples", pulse.len())]
    NonFinite { value: f64, pulse: Vec<f64> },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad user input or unreadable files rather than
    /// numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidDimension(_)
                | Error::InvalidLabel(_)
                | Error::InvalidParameter(_)
                | Error::InvalidSchedule(_)
                | Error::GridMismatch(_)
                | Error::Config(_)
                | Error::Format { .. }
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
