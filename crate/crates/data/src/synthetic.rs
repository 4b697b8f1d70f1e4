use std::f64::consts::PI;
use std::path::Path;

use deepself_dsp::{Sample, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{DataError, Result};
use crate::manifest::{write_manifest, Manifest, Split};
use crate::series::write_csv_series;

/// Two-class task: unit sine at `freqs[class]` Hz, random phase, additive
/// Gaussian noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineTask {
    pub freqs: [f64; 2],
    pub sample_rate: f64,
    pub duration: f64,
    pub noise_sigma: f64,
}

impl SineTask {
    /// Labels written to manifests, indexed by class.
    pub const LABELS: [&'static str; 2] = ["a", "b"];

    pub fn new(low_hz: f64, high_hz: f64) -> Self {
        Self {
            freqs: [low_hz, high_hz],
            sample_rate: 100.0,
            duration: 1.0,
            noise_sigma: 0.2,
        }
    }

    pub fn n_samples(&self) -> usize {
        (self.sample_rate * self.duration).round() as usize
    }

    pub fn sample<T: Sample, R: Rng>(&self, class: usize, rng: &mut R) -> Signal<T> {
        let f = self.freqs[class];
        let phase = rng.gen_range(0.0..2.0 * PI);
        let noise = Normal::new(0.0, self.noise_sigma).unwrap_or_else(|_| Normal::new(0.0, 0.0).unwrap());
        let x = (0..self.n_samples())
            .map(|t| {
                let v = (2.0 * PI * f * t as f64 / self.sample_rate + phase).sin() + noise.sample(rng);
                T::from(v).unwrap_or_else(T::zero)
            })
            .collect();
        Signal::mono(self.sample_rate, x).expect("sample rate validated by caller")
    }

    /// `n` signals alternating between class 0 and 1.
    pub fn generate<T: Sample>(&self, n: usize, seed: u64) -> Vec<(Signal<T>, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|i| (self.sample(i % 2, &mut rng), i % 2)).collect()
    }
}

/// Writes train/dev/test CSV series under `dir` plus `manifest.csv` with
/// split and fold columns. Folds cycle through `0..n_folds` across all rows.
pub fn write_sine_dataset(task: &SineTask, dir: &Path, counts: [usize; 3], n_folds: usize, seed: u64) -> Result<Manifest> {
    if n_folds == 0 || task.sample_rate.is_nan() || task.sample_rate <= 0.0 || task.n_samples() == 0 {
        return Err(DataError::Format {
            path: dir.to_path_buf(),
            message: format!("invalid synthetic task {task:?} with {n_folds} folds"),
        });
    }
    std::fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    let splits = [Split::Train, Split::Dev, Split::Test];
    for (k, (&split, &n)) in splits.iter().zip(&counts).enumerate() {
        for (i, (signal, class)) in task.generate::<f64>(n, seed.wrapping_add(k as u64)).into_iter().enumerate() {
            let path = dir.join(format!("{}_{i:04}.csv", split.name()));
            write_csv_series(&signal, &path)?;
            let fold = rows.len() % n_folds;
            rows.push((path, SineTask::LABELS[class].to_string(), Some(split), Some(fold)));
        }
    }
    let manifest = Manifest::from_rows(rows);
    write_manifest(&manifest, &dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{load_csv_series, load_manifest};

    #[test]
    fn generation_is_seeded() {
        let task = SineTask::new(5.0, 10.0);
        let a = task.generate::<f64>(6, 3);
        assert_eq!(a, task.generate::<f64>(6, 3));
        assert_ne!(a, task.generate::<f64>(6, 4));
        assert_eq!(a.iter().map(|s| s.1).collect::<Vec<_>>(), [0, 1, 0, 1, 0, 1]);
        assert_eq!(a[0].0.len(), 100);
    }

    #[test]
    fn noiseless_sine_has_unit_amplitude() {
        let task = SineTask {
            noise_sigma: 0.0,
            ..SineTask::new(5.0, 10.0)
        };
        let (s, _) = &task.generate::<f64>(1, 0)[0];
        let peak = s.channel(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 1.0 && peak > 0.95);
    }

    #[test]
    fn dataset_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let task = SineTask::new(5.0, 10.0);
        let written = write_sine_dataset(&task, dir.path(), [6, 4, 2], 3, 1).unwrap();
        let manifest = load_manifest(&dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.len(), 12);
        assert_eq!(manifest.classes, ["a", "b"]);
        assert_eq!(manifest.split(Split::Dev).len(), 4);
        assert!(manifest.rows.iter().all(|r| r.fold.unwrap() < 3));
        assert_eq!(written.rows.len(), 12);
        let s = load_csv_series::<f64>(&manifest.rows[0].path, 100.0).unwrap();
        assert_eq!(s.len(), 100);
    }
}
