//! Dataset ingestion: CSV manifests, 16-bit PCM WAV, numeric CSV series,
//! grayscale PGM images, a synthetic sine task and the Bonn EEG layout.

mod bonn;
mod error;
mod manifest;
mod pgm;
mod series;
mod synthetic;
mod wav;

pub use bonn::{load_bonn, BonnRecord, BONN_RECORD_LEN, BONN_SAMPLE_RATE};
pub use error::{DataError, Result};
pub use manifest::{load_manifest, write_manifest, Manifest, ManifestRow, Split};
pub use pgm::{load_pgm_image, GrayImage};
pub use series::{load_csv_series, write_csv_series};
pub use synthetic::{write_sine_dataset, SineTask};
pub use wav::{load_wav_pcm16, write_wav_pcm16};
