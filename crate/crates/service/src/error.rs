use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] thermosynth::Error),

    #[error("unknown latent code `{0}`")]
    UnknownCode(String),

    #[error("cannot start session: {0}")]
    Startup(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("encode error: {0}")]
    Encode(#[from] image::ImageError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Core(e) => e.kind(),
            ServiceError::UnknownCode(_) => "unknown_code",
            ServiceError::Startup(_) => "startup",
            ServiceError::Protocol(_) => "protocol",
            ServiceError::Encode(_) => "encode",
            ServiceError::Io(_) => "io",
        }
    }
}
