use thiserror::Error;

use crate::stats::GevParams;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("Doppler shift {doppler_hz} Hz aliases at sample rate {fs_hz} Hz")]
    Aliasing { doppler_hz: f64, fs_hz: f64 },

    #[error("fit did not converge after {iterations} iterations (best so far: {best:?})")]
    FitNotConverged { iterations: usize, best: GevParams },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("rank-deficient design matrix in the {model} model: column `{column}`")]
    RankDeficient { model: String, column: String },

    #[error("model evaluation: {0}")]
    Evaluation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry configuration error: {0}")]
    GeometryConfig(String),

    #[error("{path}: row {row}: {message}")]
    PassTable { path: String, row: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the batch front-end: 2 config, 3 geometry, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::RankDeficient { .. } => 2,
            Error::GeometryConfig(_) | Error::InvalidGeometry(_) => 3,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::PassTable { .. } => 4,
            _ => 1,
        }
    }
}
