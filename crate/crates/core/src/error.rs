use thiserror::Error;

/// Errors raised by tensor arithmetic and the autodiff tape.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    Length { shape: Vec<usize>, len: usize },
    #[error("invalid shape {0:?}: every dimension must be positive")]
    ZeroDim(Vec<usize>),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("contract error: {0}")]
    Contract(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
