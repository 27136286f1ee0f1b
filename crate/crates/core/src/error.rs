use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation and testing pipeline.
#[derive(Debug, Error)]
pub enum MmarError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-positive price {value} at index {index}")]
    NonPositivePrice { index: usize, value: f64 },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("series too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("rank-deficient regression: {0}")]
    RankDeficient(String),

    #[error("no real moment order solves tau(q) = 0: tau1 = {tau1}, tau2 = {tau2}, discriminant = {discriminant}")]
    NoRealRoot { tau1: f64, tau2: f64, discriminant: f64 },

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("explosive autoregression: companion spectral radius {0:.6} >= 1")]
    Explosive(f64),

    #[error("singular cloud covariance (determinant {0:e})")]
    SingularCovariance(f64),

    #[error("{excluded} of {reps} replications failed, above the 1% tolerance")]
    TooManyFailures { excluded: usize, reps: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MmarError>;

impl MmarError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MmarError::Io {
            path: path.into(),
            source,
        }
    }
}
