use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("sample `{sample_id}`: {source}")]
    Sample {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("detector unavailable: {0}")]
    DetectorUnavailable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Dimension(_) => "dimension",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Numerical(_) => "numerical",
            Error::Divergence { .. } => "divergence",
            Error::Sample { .. } => "sample",
            Error::DetectorUnavailable(_) => "detector_unavailable",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
        }
    }
}
