use std::f64::consts::PI;

use num_complex::Complex64;
use num_traits::NumCast;

use crate::error::{DspError, Result};
use crate::signal::{Sample, Signal};

/// Order of the analog low-pass prototype. The band-pass has twice as many poles.
pub const PROTOTYPE_ORDER: usize = 4;

/// Second-order section `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    pub fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let zi2 = zi * zi;
        (self.b0 + self.b1 * zi + self.b2 * zi2) / (1.0 + self.a1 * zi + self.a2 * zi2)
    }

    /// Roots of `z² + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }
}

/// Butterworth band-pass as a cascade of biquads.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterCascade {
    pub sections: Vec<Biquad>,
    pub low_hz: f64,
    pub high_hz: f64,
    pub sample_rate: f64,
    pub prototype_order: usize,
}

impl FilterCascade {
    pub fn n_poles(&self) -> usize {
        2 * self.sections.len()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(Biquad::poles).collect()
    }

    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * freq_hz / self.sample_rate);
        self.sections.iter().map(|s| s.response(z)).product()
    }

    pub fn gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response(freq_hz).norm().log10()
    }
}

/// Band-pass from an order-4 analog Butterworth low-pass prototype, mapped
/// to band-pass (8 poles) and digitised by the bilinear transform with
/// prewarped cutoffs. Unit gain at the band centre.
pub fn design_butterworth_bandpass(low_hz: f64, high_hz: f64, sample_rate: f64) -> Result<FilterCascade> {
    let nyquist = sample_rate / 2.0;
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(DspError::Config(format!("sample rate must be positive, got {sample_rate}")));
    }
    if !(low_hz > 0.0 && low_hz.is_finite()) {
        return Err(DspError::Config(format!("low cutoff must be > 0 Hz, got {low_hz}")));
    }
    if low_hz >= high_hz || high_hz.is_nan() {
        return Err(DspError::Config(format!(
            "low must be < high (low {low_hz} Hz, high {high_hz} Hz)"
        )));
    }
    if high_hz >= nyquist {
        return Err(DspError::Config(format!(
            "high cutoff {high_hz} Hz must be below Nyquist ({nyquist} Hz)"
        )));
    }
    let fs2 = 2.0 * sample_rate;
    let w1 = fs2 * (PI * low_hz / sample_rate).tan();
    let w2 = fs2 * (PI * high_hz / sample_rate).tan();
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    let n = PROTOTYPE_ORDER;
    let mut digital = Vec::with_capacity(n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let half = p * bw / 2.0;
        let root = (half * half - w0_sq).sqrt();
        for s in [half + root, half - root] {
            let z = (fs2 + s) / (fs2 - s);
            if z.im > 0.0 {
                digital.push(z);
            }
        }
    }
    if digital.len() != n {
        return Err(DspError::Config(format!(
            "band {low_hz}-{high_hz} Hz at {sample_rate} Hz is numerically degenerate"
        )));
    }
    digital.sort_by(|a, b| a.arg().total_cmp(&b.arg()));

    // each section gets one conjugate pole pair and zeros at z = ±1
    let sections = digital
        .iter()
        .map(|z| Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -2.0 * z.re,
            a2: z.norm_sqr(),
        })
        .collect();
    let mut cascade = FilterCascade {
        sections,
        low_hz,
        high_hz,
        sample_rate,
        prototype_order: n,
    };
    let centre_hz = sample_rate / PI * (w0_sq.sqrt() / fs2).atan();
    let gain = cascade.response(centre_hz).norm().recip().powf(1.0 / n as f64);
    for s in &mut cascade.sections {
        s.b0 *= gain;
        s.b2 *= gain;
    }
    Ok(cascade)
}

/// Causal direct-form-II-transposed filtering, channel by channel, from a zero state.
pub fn apply_iir<T: Sample>(signal: &Signal<T>, cascade: &FilterCascade) -> Result<Signal<T>> {
    let (a, b) = (signal.sample_rate(), cascade.sample_rate);
    if (a - b).abs() > 1e-9 * a.max(b) {
        return Err(DspError::Config(format!(
            "filter designed for {b} Hz applied to a {a} Hz signal"
        )));
    }
    let channels = signal
        .channels()
        .iter()
        .map(|channel| {
            let mut buf: Vec<f64> = channel.iter().map(|v| v.to_f64().unwrap_or(0.0)).collect();
            for s in &cascade.sections {
                let (mut z1, mut z2) = (0.0, 0.0);
                for v in buf.iter_mut() {
                    let x = *v;
                    let y = s.b0 * x + z1;
                    z1 = s.b1 * x - s.a1 * y + z2;
                    z2 = s.b2 * x - s.a2 * y;
                    *v = y;
                }
            }
            buf.into_iter().map(|v| <T as NumCast>::from(v).unwrap_or_else(T::zero)).collect()
        })
        .collect();
    Signal::new(signal.sample_rate(), channels)
}
