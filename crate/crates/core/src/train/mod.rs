//! Mini-batch training with SGD or Adam, best-dev-model selection,
//! binary checkpoints and checkpoint-based fine-tuning.

mod checkpoint;
mod dataset;
mod optim;
mod trainer;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError, Metadata};
pub use dataset::Dataset;
pub use optim::{adam_step, sgd_step, AdamState, Optimizer};
pub use trainer::{
    evaluate, fine_tune, fine_tune_model, predict_probabilities, train, train_with, EpochRecord, TrainConfig,
    TrainHistory, TrainOutcome,
};

use thiserror::Error;

use crate::error::TensorError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("numeric error at epoch {epoch}, batch {batch}: {source}")]
    Numeric {
        epoch: usize,
        batch: usize,
        #[source]
        source: TensorError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("metric error: {0}")]
    Metric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
