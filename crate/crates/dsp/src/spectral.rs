use std::f64::consts::PI;

use num_complex::Complex;
use num_traits::NumCast;
use rustfft::FftPlanner;

use crate::error::{DspError, Result};
use crate::feature::FeatureMap;
use crate::signal::{Sample, Signal};

/// Added before taking the log of mel energies.
pub const LOG_FLOOR: f64 = 1e-10;

fn cast<T: Sample>(v: f64) -> T {
    <T as NumCast>::from(v).unwrap_or_else(T::zero)
}

/// Periodic Hann window `0.5 − 0.5·cos(2πn/N)`.
pub fn hann_window<T: Sample>(len: usize) -> Vec<T> {
    (0..len)
        .map(|n| cast(0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()))
        .collect()
}

/// One-sided power spectrogram, `window_len/2 + 1` rows by
/// `1 + ⌊(N − window_len)/hop⌋` frames.
pub fn spectrogram<T: Sample>(signal: &Signal<T>, window_len: usize, hop: usize) -> Result<FeatureMap<T>> {
    let x = signal.require_mono("spectrogram")?;
    if window_len == 0 || hop == 0 {
        return Err(DspError::Config("window and hop must be at least 1 sample".into()));
    }
    if hop > window_len {
        return Err(DspError::Config(format!("hop {hop} exceeds window {window_len}")));
    }
    if window_len > x.len() {
        return Err(DspError::Config(format!(
            "window of {window_len} samples is longer than the signal ({} samples)",
            x.len()
        )));
    }
    let frames = 1 + (x.len() - window_len) / hop;
    let rows = window_len / 2 + 1;
    let window = hann_window::<T>(window_len);
    let fft = FftPlanner::<T>::new().plan_fft_forward(window_len);
    let mut values = vec![T::zero(); rows * frames];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); window_len];
    for t in 0..frames {
        let start = t * hop;
        for (b, (&v, &w)) in buf.iter_mut().zip(x[start..start + window_len].iter().zip(&window)) {
            *b = Complex::new(v * w, T::zero());
        }
        fft.process(&mut buf);
        for (k, c) in buf.iter().take(rows).enumerate() {
            values[k * frames + t] = c.norm_sqr();
        }
    }
    let fs = signal.sample_rate();
    let row_axis = (0..rows).map(|k| k as f64 * fs / window_len as f64).collect();
    FeatureMap::new(rows, frames, values, row_axis, hop as f64 / fs)
}

/// HTK mel scale `2595·log₁₀(1 + f/700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn mel_centres(n_mels: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular filters `[n_mels × n_fft_bins]` with peak 1, evaluated at the
/// bin frequencies of a one-sided spectrum. A filter too narrow to cover any
/// bin gets a single 1 at the bin nearest its centre.
pub fn mel_filterbank(n_mels: usize, n_fft_bins: usize, sample_rate: f64, fmin: f64, fmax: f64) -> Result<Vec<Vec<f64>>> {
    if n_mels == 0 {
        return Err(DspError::Config("n_mels must be at least 1".into()));
    }
    if n_fft_bins < 2 {
        return Err(DspError::Config("need at least 2 FFT bins".into()));
    }
    let nyquist = sample_rate / 2.0;
    if !(fmin >= 0.0 && fmin < fmax && fmax <= nyquist) {
        return Err(DspError::Config(format!(
            "mel range must satisfy 0 <= fmin < fmax <= {nyquist} Hz, got {fmin}..{fmax}"
        )));
    }
    let bin_hz = nyquist / (n_fft_bins - 1) as f64;
    let edges = mel_centres(n_mels, fmin, fmax);
    let bank = edges
        .windows(3)
        .map(|e| {
            let (lo, c, hi) = (e[0], e[1], e[2]);
            let mut row: Vec<f64> = (0..n_fft_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= c {
                        (f - lo) / (c - lo)
                    } else {
                        (hi - f) / (hi - c)
                    }
                })
                .collect();
            let peak = row.iter().copied().fold(0.0, f64::max);
            if peak > 0.0 {
                row.iter_mut().for_each(|v| *v /= peak);
            } else {
                let nearest = ((c / bin_hz).round() as usize).min(n_fft_bins - 1);
                row[nearest] = 1.0;
            }
            row
        })
        .collect();
    Ok(bank)
}

/// `ln(mel · power + 1e-10)`, `n_mels` rows.
pub fn log_mel_spectrogram<T: Sample>(
    signal: &Signal<T>,
    window_len: usize,
    hop: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<FeatureMap<T>> {
    let bank = mel_filterbank(n_mels, window_len / 2 + 1, signal.sample_rate(), fmin, fmax)?;
    let spec = spectrogram(signal, window_len, hop)?;
    let cols = spec.cols;
    let mut values = Vec::with_capacity(n_mels * cols);
    for filter in &bank {
        for t in 0..cols {
            let energy: f64 = filter
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(k, w)| w * spec.get(k, t).to_f64().unwrap_or(0.0))
                .sum();
            values.push(cast((energy + LOG_FLOOR).ln()));
        }
    }
    let centres = mel_centres(n_mels, fmin, fmax)[1..=n_mels].to_vec();
    FeatureMap::new(n_mels, cols, values, centres, spec.seconds_per_frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_points() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.1);
        assert!((mel_to_hz(hz_to_mel(440.0)) - 440.0).abs() < 1e-9);
    }

    #[test]
    fn frame_count() {
        let s = Signal::mono(16000.0, vec![0.0f32; 1024]).unwrap();
        let m = spectrogram(&s, 1024, 512).unwrap();
        assert_eq!((m.rows, m.cols), (513, 1));
        let s = Signal::mono(16000.0, vec![0.0f32; 3000]).unwrap();
        assert_eq!(spectrogram(&s, 1024, 512).unwrap().cols, 1 + (3000 - 1024) / 512);
        assert!(spectrogram(&s, 4096, 512).is_err());
    }

    #[test]
    fn hann_is_periodic() {
        let w = hann_window::<f64>(4);
        let expected = [0.0, 0.5, 1.0, 0.5];
        assert!(w.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn filterbank_rows_peak_at_one() {
        for (n_mels, bins, fs) in [(40, 513, 16000.0), (64, 201, 8000.0), (128, 65, 16000.0)] {
            let bank = mel_filterbank(n_mels, bins, fs, 0.0, fs / 2.0).unwrap();
            assert_eq!(bank.len(), n_mels);
            for row in &bank {
                assert!(row.iter().all(|&v| v >= 0.0));
                assert_eq!(row.iter().copied().fold(0.0, f64::max), 1.0);
                assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            }
        }
        assert!(mel_filterbank(10, 65, 16000.0, 100.0, 9000.0).is_err());
        assert!(mel_filterbank(10, 65, 16000.0, 500.0, 100.0).is_err());
    }
}
