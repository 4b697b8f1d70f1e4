//! Evaluation: confusion matrices, unweighted average recall,
//! distributor-fold cross-validation and late fusion of predictions.

mod cv;
mod fusion;
mod metrics;

pub use cv::{kfold_cross_validate, write_fold_report, CvReport, FoldResult, FoldedDataset};
pub use fusion::{fuse_predictions, FusionMode, Prediction, PredictionSet};
pub use metrics::{confusion_matrix, uar, ConfusionMatrix};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {truth} truth labels vs {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("no evaluated instances: UAR is undefined")]
    Undefined,
    #[error("prediction sets disagree at {0}")]
    Mismatch(String),
    #[error("invalid prediction set: {0}")]
    Invalid(String),
    #[error("cross-validation: {0}")]
    Folds(String),
    #[error(transparent)]
    Train(#[from] crate::train::TrainError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
