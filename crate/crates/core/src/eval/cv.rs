use std::collections::BTreeSet;
use std::path::Path;

use log::info;
use rayon::prelude::*;

use super::EvalError;
use crate::model::{Model, ModelSpec};
use crate::scalar::Scalar;
use crate::train::{evaluate, predict_probabilities, train, Dataset, TrainConfig};

/// A dataset whose instances carry distributor-assigned fold ids.
#[derive(Clone, Debug)]
pub struct FoldedDataset<T> {
    pub data: Dataset<T>,
    pub ids: Vec<String>,
    pub folds: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    /// Fold id used as test set.
    pub fold: usize,
    pub dev_fold: usize,
    pub test_uar: f64,
    pub best_dev_uar: f64,
    pub best_epoch: usize,
    /// Instance indices tested in this fold.
    pub test_indices: Vec<usize>,
    /// Class probabilities for `test_indices`, in the same order.
    pub test_probs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    /// Unweighted mean of the per-fold test UARs.
    pub mean_uar: f64,
}

impl<T: Scalar> FoldedDataset<T> {
    pub fn new(data: Dataset<T>, ids: Vec<String>, folds: Vec<usize>) -> Result<Self, EvalError> {
        if ids.len() != data.len() || folds.len() != data.len() {
            return Err(EvalError::Folds(format!(
                "{} samples, {} ids, {} fold ids",
                data.len(),
                ids.len(),
                folds.len()
            )));
        }
        Ok(Self { data, ids, folds })
    }

    /// Distinct fold ids in ascending order; every id between the smallest
    /// and largest must be populated.
    pub fn fold_ids(&self) -> Result<Vec<usize>, EvalError> {
        let present: BTreeSet<usize> = self.folds.iter().copied().collect();
        let (Some(&lo), Some(&hi)) = (present.first(), present.last()) else {
            return Err(EvalError::Folds("no instances".into()));
        };
        if let Some(empty) = (lo..=hi).find(|f| !present.contains(f)) {
            return Err(EvalError::Folds(format!("fold {empty} has no instances")));
        }
        if present.len() < 2 {
            return Err(EvalError::Folds(format!("need at least 2 folds, found {}", present.len())));
        }
        Ok(present.into_iter().collect())
    }

    fn indices_of(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }
}

/// K-fold cross-validation over the given fold assignment. Fold `k` is
/// tested, fold `k+1` (cyclically) selects the best epoch, the rest train.
/// Fold `k` uses seeds `spec.seed + k` and `config.seed + k`; folds run on
/// up to `jobs` threads and results do not depend on that number.
pub fn kfold_cross_validate<T: Scalar>(
    folded: &FoldedDataset<T>,
    spec: &ModelSpec,
    config: &TrainConfig,
    jobs: usize,
) -> Result<CvReport, EvalError> {
    let fold_ids = folded.fold_ids()?;
    config.validate()?;
    let k = fold_ids.len();
    let run = |pos: usize| -> Result<FoldResult, EvalError> {
        let fold = fold_ids[pos];
        let dev_fold = fold_ids[(pos + 1) % k];
        let test_idx = folded.indices_of(fold);
        let dev_idx = folded.indices_of(dev_fold);
        let train_idx: Vec<usize> = (0..folded.folds.len())
            .filter(|&i| folded.folds[i] != fold && folded.folds[i] != dev_fold)
            .collect();
        if train_idx.is_empty() {
            return Err(EvalError::Folds(format!("fold {fold}: no training instances left")));
        }
        let fold_spec = spec.clone().with_seed(spec.seed.wrapping_add(pos as u64));
        let fold_config = TrainConfig {
            seed: config.seed.wrapping_add(pos as u64),
            ..config.clone()
        };
        let model = Model::<T>::init(fold_spec).map_err(crate::train::TrainError::from)?;
        let test = folded.data.subset(&test_idx);
        let out = train(
            model,
            &folded.data.subset(&train_idx),
            &folded.data.subset(&dev_idx),
            &fold_config,
        )?;
        let test_uar = evaluate(&out.model, &test)?;
        info!("fold {fold}: test UAR {test_uar:.2} (dev fold {dev_fold}, best epoch {})", out.best_epoch);
        Ok(FoldResult {
            fold,
            dev_fold,
            test_uar,
            best_dev_uar: out.best_dev_uar,
            best_epoch: out.best_epoch,
            test_probs: predict_probabilities(&out.model, &test)?,
            test_indices: test_idx,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| EvalError::Folds(format!("thread pool: {e}")))?;
    let folds = pool.install(|| (0..k).into_par_iter().map(run).collect::<Result<Vec<_>, _>>())?;
    let mean_uar = folds.iter().map(|f| f.test_uar).sum::<f64>() / k as f64;
    Ok(CvReport { folds, mean_uar })
}

/// Writes `fold,test_uar` rows followed by `mean,<value>`.
pub fn write_fold_report(report: &CvReport, path: &Path) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["fold", "test_uar"])?;
    for f in &report.folds {
        w.write_record([f.fold.to_string(), f.test_uar.to_string()])?;
    }
    w.write_record(["mean".to_string(), report.mean_uar.to_string()])?;
    w.flush()?;
    Ok(())
}
