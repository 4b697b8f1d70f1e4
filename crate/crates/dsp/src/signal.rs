use num_traits::{Float, FloatConst};
use rustfft::FftNum;

use crate::error::{DspError, Result};

/// Sample type accepted by every transform.
pub trait Sample: FftNum + Float + FloatConst {}

impl<T: FftNum + Float + FloatConst> Sample for T {}

/// Equal-length channels sampled at `sample_rate` Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal<T> {
    sample_rate: f64,
    channels: Vec<Vec<T>>,
}

impl<T: Sample> Signal<T> {
    pub fn new(sample_rate: f64, channels: Vec<Vec<T>>) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(DspError::Config(format!("sample rate must be positive, got {sample_rate}")));
        }
        let len = channels
            .first()
            .map(Vec::len)
            .ok_or_else(|| DspError::Config("signal has no channels".into()))?;
        if len == 0 {
            return Err(DspError::Config("signal has no samples".into()));
        }
        if let Some(c) = channels.iter().position(|c| c.len() != len) {
            return Err(DspError::Config(format!(
                "channel {c} has {} samples, channel 0 has {len}",
                channels[c].len()
            )));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(DspError::Config("signal contains non-finite samples".into()));
        }
        Ok(Self { sample_rate, channels })
    }

    pub fn mono(sample_rate: f64, samples: Vec<T>) -> Result<Self> {
        Self::new(sample_rate, vec![samples])
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channel(&self, i: usize) -> &[T] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<T>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<T>> {
        self.channels
    }

    /// Splits into single-channel signals.
    pub fn split(&self) -> Vec<Signal<T>> {
        self.channels
            .iter()
            .map(|c| Signal {
                sample_rate: self.sample_rate,
                channels: vec![c.clone()],
            })
            .collect()
    }

    /// Crops from the start or zero-pads at the end to exactly `len` samples.
    pub fn fit_length(&self, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(DspError::Config("fixed length must be at least 1".into()));
        }
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let mut c = c[..c.len().min(len)].to_vec();
                c.resize(len, T::zero());
                c
            })
            .collect();
        Ok(Self {
            sample_rate: self.sample_rate,
            channels,
        })
    }

    pub(crate) fn require_mono(&self, op: &str) -> Result<&[T]> {
        if self.channels.len() != 1 {
            return Err(DspError::Config(format!(
                "{op} needs a single-channel signal, got {} channels",
                self.channels.len()
            )));
        }
        Ok(&self.channels[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_signals() {
        assert!(Signal::<f32>::new(0.0, vec![vec![1.0]]).is_err());
        assert!(Signal::<f32>::new(8.0, vec![]).is_err());
        assert!(Signal::<f32>::new(8.0, vec![vec![]]).is_err());
        assert!(Signal::<f32>::new(8.0, vec![vec![1.0, 2.0], vec![1.0]]).is_err());
        assert!(Signal::<f32>::new(8.0, vec![vec![f32::NAN]]).is_err());
    }

    #[test]
    fn fit_length_crops_and_pads() {
        let s = Signal::new(10.0, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(s.fit_length(2).unwrap().channels(), &[vec![1.0, 2.0], vec![4.0, 5.0]]);
        assert_eq!(s.fit_length(5).unwrap().channel(1), &[4.0, 5.0, 6.0, 0.0, 0.0]);
        assert_eq!(s.fit_length(3).unwrap(), s);
    }
}
