use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: not a RIFF/WAVE file")]
    NotWave { path: PathBuf },
    #[error("{path}: unsupported WAV format code {code} (only PCM = 1)")]
    UnsupportedWavFormat { path: PathBuf, code: u16 },
    #[error("{path}: unsupported bit depth {bits} (only 16-bit PCM)")]
    UnsupportedBitDepth { path: PathBuf, bits: u16 },
    #[error("{path}: truncated {chunk} chunk")]
    Truncated { path: PathBuf, chunk: &'static str },
    #[error("{path}: row {row}, column {col}: cannot parse '{value}' as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        value: String,
    },
    #[error("{path}: row {row} has {found} columns, expected {expected}")]
    Ragged {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: unsupported image format '{magic}' (only P2/P5 grayscale)")]
    UnsupportedImage { path: PathBuf, magic: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Signal(#[from] deepself_dsp::DspError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
