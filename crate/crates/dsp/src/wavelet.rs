use std::f64::consts::PI;

use num_complex::Complex;
use num_traits::NumCast;
use rustfft::FftPlanner;

use crate::error::{DspError, Result};
use crate::feature::FeatureMap;
use crate::signal::{Sample, Signal};

/// Centre frequency (rad) of the analytic Morlet wavelet.
pub const MORLET_OMEGA0: f64 = 6.0;

/// `fmax·2^(−j/n_voices)` for every `j` down to `fmin`, highest first.
pub fn scalogram_frequencies(n_voices: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut j = 0;
    loop {
        let f = fmax * 2f64.powf(-(j as f64) / n_voices as f64);
        if f < fmin * (1.0 - 1e-12) {
            break;
        }
        out.push(f);
        j += 1;
    }
    out
}

/// Magnitude of the continuous wavelet transform with an analytic Morlet
/// wavelet (ω₀ = 6), computed by frequency-domain multiplication. One
/// column per input sample; rows run from `fmax` down to `fmin`.
pub fn scalogram<T: Sample>(signal: &Signal<T>, n_voices: usize, fmin: f64, fmax: f64) -> Result<FeatureMap<T>> {
    let x = signal.require_mono("scalogram")?;
    let fs = signal.sample_rate();
    if n_voices == 0 {
        return Err(DspError::Config("voices per octave must be at least 1".into()));
    }
    if !(fmin > 0.0 && fmin < fmax && fmax <= fs / 2.0) {
        return Err(DspError::Config(format!(
            "scalogram range must satisfy 0 < fmin < fmax <= {} Hz, got {fmin}..{fmax}",
            fs / 2.0
        )));
    }
    let freqs = scalogram_frequencies(n_voices, fmin, fmax);
    let n = x.len();
    let len = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<T>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let zero = Complex::new(T::zero(), T::zero());
    let mut spectrum = vec![zero; len];
    for (s, &v) in spectrum.iter_mut().zip(x) {
        *s = Complex::new(v, T::zero());
    }
    forward.process(&mut spectrum);

    let cast = |v: f64| <T as NumCast>::from(v).unwrap_or_else(T::zero);
    let mut values = Vec::with_capacity(freqs.len() * n);
    let mut buf = vec![zero; len];
    for &f in &freqs {
        let scale = MORLET_OMEGA0 * fs / (2.0 * PI * f);
        let norm = (2.0 * PI * scale).sqrt() * PI.powf(-0.25) / len as f64;
        for (k, (b, &s)) in buf.iter_mut().zip(&spectrum).enumerate() {
            // only positive frequencies: the wavelet is analytic
            *b = if k == 0 || k > len / 2 {
                zero
            } else {
                let w = 2.0 * PI * k as f64 / len as f64;
                let d = scale * w - MORLET_OMEGA0;
                s * cast(norm * (-0.5 * d * d).exp())
            };
        }
        inverse.process(&mut buf);
        values.extend(buf[..n].iter().map(|c| c.norm()));
    }
    FeatureMap::new(freqs.len(), n, values, freqs, 1.0 / fs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_grid() {
        let f = scalogram_frequencies(8, 1.0, 40.0);
        assert_eq!(f[0], 40.0);
        assert!((f[16] - 10.0).abs() < 1e-12);
        assert!(*f.last().unwrap() >= 1.0);
        assert!(f.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(scalogram_frequencies(4, 1.0, 2.0).len(), 5);
    }

    #[test]
    fn shape_and_range_errors() {
        let s = Signal::mono(100.0, vec![0.0f64; 50]).unwrap();
        let m = scalogram(&s, 4, 2.0, 20.0).unwrap();
        assert_eq!(m.cols, 50);
        assert!(scalogram(&s, 4, 0.0, 20.0).is_err());
        assert!(scalogram(&s, 4, 5.0, 60.0).is_err());
    }
}
