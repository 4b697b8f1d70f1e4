//! Turning manifest files into model inputs.
//!
//! Every input becomes a [`FeatureMap`] first. Raw signals kept as they are
//! (`feature = none`) are stored with one row per channel and an all-zero row
//! axis; such maps feed the model as `[channels, samples]`. Any other map is
//! `[1, rows, cols]`, with the transforms of several channels stacked along
//! the rows.

use std::path::Path;

use anyhow::{bail, Context, Result};
use deepself_core::Tensor;
use deepself_data::{load_csv_series, load_pgm_image, load_wav_pcm16};
use deepself_dsp::{
    apply_iir, design_butterworth_bandpass, log_mel_spectrogram, read_feature_map, scalogram, spectrogram,
    FeatureMap, Signal,
};

use crate::config::{DataConfig, Feature, Preprocess};

/// Octaves spanned by a scalogram when `fmin` is not configured.
const DEFAULT_SCALOGRAM_OCTAVES: f64 = 6.0;

/// What is needed to turn a file into a model input.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSettings {
    pub preprocess: Preprocess,
    pub sample_rate: Option<f64>,
    pub fixed_length: Option<usize>,
}

impl InputSettings {
    pub fn new(preprocess: &Preprocess, data: &DataConfig) -> Self {
        Self {
            preprocess: preprocess.clone(),
            sample_rate: data.sample_rate,
            fixed_length: data.fixed_length,
        }
    }

    fn is_identity(&self) -> bool {
        self.preprocess.filter.is_none() && self.preprocess.feature == Feature::None
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn samples(ms: f64, fs: f64) -> usize {
    ((ms * fs / 1000.0).round() as usize).max(1)
}

fn transform(signal: &Signal<f64>, p: &Preprocess) -> Result<FeatureMap<f64>> {
    let fs = signal.sample_rate();
    let nyquist = fs / 2.0;
    let channel_maps = signal
        .split()
        .iter()
        .map(|mono| {
            Ok(match p.feature {
                Feature::None => unreachable!("handled by the caller"),
                Feature::Spectrogram => spectrogram(mono, samples(p.window_ms, fs).max(2), samples(p.hop_ms, fs))?,
                Feature::LogMel => log_mel_spectrogram(
                    mono,
                    samples(p.window_ms, fs).max(2),
                    samples(p.hop_ms, fs),
                    p.n_mels,
                    p.fmin.unwrap_or(0.0),
                    p.fmax.unwrap_or(nyquist),
                )?,
                Feature::Scalogram => {
                    let fmax = p.fmax.unwrap_or(nyquist);
                    let fmin = p.fmin.unwrap_or(fmax / 2f64.powf(DEFAULT_SCALOGRAM_OCTAVES));
                    scalogram(mono, p.voices, fmin, fmax)?
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let first = &channel_maps[0];
    let (rows, cols) = (first.rows, first.cols);
    let mut values = Vec::with_capacity(rows * cols * channel_maps.len());
    let mut axis = Vec::with_capacity(rows * channel_maps.len());
    for m in &channel_maps {
        values.extend_from_slice(&m.values);
        axis.extend_from_slice(&m.row_axis);
    }
    Ok(FeatureMap::new(rows * channel_maps.len(), cols, values, axis, first.seconds_per_frame)?)
}

/// Fixed length, band-pass and feature transform for one signal.
pub fn condition(signal: Signal<f64>, settings: &InputSettings) -> Result<FeatureMap<f64>> {
    let signal = match settings.fixed_length {
        Some(n) => signal.fit_length(n)?,
        None => signal,
    };
    let p = &settings.preprocess;
    let signal = match p.filter {
        Some((low, high)) => apply_iir(&signal, &design_butterworth_bandpass(low, high, signal.sample_rate())?)?,
        None => signal,
    };
    if p.feature != Feature::None {
        return transform(&signal, p);
    }
    let (c, n) = (signal.n_channels(), signal.len());
    let fs = signal.sample_rate();
    let values = signal.into_channels().concat();
    Ok(FeatureMap::new(c, n, values, vec![0.0; c], 1.0 / fs)?)
}

/// Loads any supported file and conditions it into a feature map.
pub fn load_map(path: &Path, settings: &InputSettings) -> Result<FeatureMap<f64>> {
    let ext = extension(path);
    let map = match ext.as_str() {
        "dsfm" => read_feature_map::<f64>(path)?,
        "pgm" => {
            if !settings.is_identity() {
                bail!("filtering and feature maps apply to 1-D signals, not to image {}", path.display());
            }
            let img = load_pgm_image::<f64>(path)?;
            let axis = (0..img.height).map(|r| r as f64).collect();
            FeatureMap::new(img.height, img.width, img.pixels, axis, 0.0)?
        }
        "wav" => condition(load_wav_pcm16(path)?, settings)?,
        "csv" | "txt" => {
            let Some(fs) = settings.sample_rate else {
                bail!("{}: CSV series carry no sample rate; set data.sample_rate", path.display());
            };
            condition(load_csv_series(path, fs)?, settings)?
        }
        _ => bail!("{}: unsupported file type (expected .wav, .csv, .txt, .pgm or .dsfm)", path.display()),
    };
    Ok(map)
}

/// Model input for a map: `[channels, samples]` for raw signals, else `[1, rows, cols]`.
pub fn map_to_tensor(map: &FeatureMap<f64>) -> Tensor<f32> {
    let shape = if map.row_axis.iter().all(|&v| v == 0.0) {
        vec![map.rows, map.cols]
    } else {
        vec![1, map.rows, map.cols]
    };
    Tensor::new(shape, map.values.iter().map(|&v| v as f32).collect()).expect("map sizes are consistent")
}

pub fn load_tensor(path: &Path, settings: &InputSettings) -> Result<Tensor<f32>> {
    let map = load_map(path, settings).with_context(|| format!("loading {}", path.display()))?;
    Ok(map_to_tensor(&map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Ini, RunConfig};

    fn settings(text: &str) -> InputSettings {
        let c = RunConfig::from_ini(&Ini::parse(text, "t").unwrap()).unwrap();
        InputSettings::new(&c.preprocess, &c.data)
    }

    fn sine(channels: usize, n: usize) -> Signal<f64> {
        let ch = (0..channels)
            .map(|c| (0..n).map(|t| (t as f64 * 0.3 + c as f64).sin()).collect())
            .collect();
        Signal::new(100.0, ch).unwrap()
    }

    #[test]
    fn raw_signals_keep_channels() {
        let map = condition(sine(3, 50), &settings("")).unwrap();
        assert_eq!(map.shape(), [3, 50]);
        assert_eq!(map_to_tensor(&map).shape(), &[3, 50]);
        let map = condition(sine(1, 50), &settings("[data]\nfixed_length = 80\n")).unwrap();
        assert_eq!(map.cols, 80);
    }

    #[test]
    fn features_stack_channels_along_rows() {
        let s = settings("[preprocess]\nfeature = logmel\nn_mels = 10\nwindow_ms = 160\nhop_ms = 80\n");
        let map = condition(sine(2, 100), &s).unwrap();
        assert_eq!(map.rows, 20);
        assert_eq!(map_to_tensor(&map).shape(), &[1, 20, map.cols]);
        let single = condition(sine(1, 100), &s).unwrap();
        assert_eq!(map.values[..single.values.len()], single.values[..]);
    }

    #[test]
    fn filter_errors_surface() {
        let s = settings("[preprocess]\nfilter = on\nlow_hz = 10\nhigh_hz = 60\n");
        let err = condition(sine(1, 100), &s).unwrap_err().to_string();
        assert!(err.contains("Nyquist"), "{err}");
    }
}
