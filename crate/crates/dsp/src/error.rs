use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("feature map format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DspError> = std::result::Result<T, E>;
