//! Pre-processing for 1-D signals: Butterworth band-pass filtering and
//! time-frequency feature maps (spectrogram, log-mel spectrogram, scalogram).
//!
//! Signals are generic over [`Sample`] (`f32` or `f64`). Filter design and
//! evaluation always run in `f64`.

mod error;
mod feature;
mod filter;
mod signal;
mod spectral;
mod wavelet;

pub use error::{DspError, Result};
pub use feature::{read_feature_map, write_feature_map, FeatureMap};
pub use filter::{apply_iir, design_butterworth_bandpass, Biquad, FilterCascade};
pub use signal::{Sample, Signal};
pub use spectral::{hann_window, hz_to_mel, log_mel_spectrogram, mel_filterbank, mel_to_hz, spectrogram, LOG_FLOOR};
pub use wavelet::{scalogram, scalogram_frequencies, MORLET_OMEGA0};

pub type Signal32 = Signal<f32>;
pub type Signal64 = Signal<f64>;
pub type FeatureMap32 = FeatureMap<f32>;
pub type FeatureMap64 = FeatureMap<f64>;
