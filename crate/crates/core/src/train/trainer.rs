use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::checkpoint::load_checkpoint;
use super::dataset::Dataset;
use super::optim::{adam_step, sgd_step, AdamState, Optimizer};
use super::TrainError;
use crate::error::TensorError;
use crate::eval::{confusion_matrix, uar};
use crate::model::Model;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::argmax;

const EVAL_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            epochs: 10,
            optimizer: Optimizer::adam(),
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if let Optimizer::Adam { beta1, beta2, eps } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                return bad(format!("adam betas must lie in [0, 1), got {beta1}, {beta2}"));
            }
            if !(eps.is_finite() && eps > 0.0) {
                return bad(format!("adam epsilon must be positive, got {eps}"));
            }
        }
        Ok(())
    }

    /// Short hex SHA-256 of the configuration, stored with checkpoints.
    pub fn digest(&self) -> String {
        let text = format!("{self:?}");
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_uar: f64,
    pub dev_uar: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First epoch (1-based) with the maximum dev UAR.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for r in &self.records {
            if best.is_none_or(|b| r.dev_uar > b.dev_uar) {
                best = Some(r);
            }
        }
        best.map(|r| r.epoch)
    }

    /// First epoch whose dev UAR reaches `threshold`.
    pub fn first_epoch_reaching(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.dev_uar >= threshold).map(|r| r.epoch)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["epoch", "train_loss", "train_uar", "dev_uar"]).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.train_uar.to_string(),
                r.dev_uar.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> TrainError {
    TrainError::Io(std::io::Error::other(e))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    /// Parameter snapshot of the best dev epoch.
    pub model: Model<T>,
    pub history: TrainHistory,
    pub best_epoch: usize,
    pub best_dev_uar: f64,
}

fn metric(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<f64, TrainError> {
    let cm = confusion_matrix(truth, pred, n_classes).map_err(|e| TrainError::Metric(e.to_string()))?;
    uar(&cm).map_err(|e| TrainError::Metric(e.to_string()))
}

/// Class probabilities `[N × n_classes]` for every sample, in order.
pub fn predict_probabilities<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<Vec<Vec<f64>>, TrainError> {
    check_input(model, data)?;
    let c = model.n_classes();
    let mut out = Vec::with_capacity(data.len());
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (_, probs) = model.forward(&data.batch(chunk))?;
        out.extend(probs.data().chunks(c).map(|row| row.iter().map(|p| p.to_f64_lossy()).collect()));
    }
    Ok(out)
}

/// UAR (percent) of `model` on `data`.
pub fn evaluate<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset("evaluation"));
    }
    data.check_labels(model.n_classes())?;
    let pred: Vec<usize> = predict_probabilities(model, data)?.iter().map(|p| argmax(p)).collect();
    metric(data.labels(), &pred, model.n_classes())
}

fn check_input<T: Scalar>(model: &Model<T>, data: &Dataset<T>) -> Result<(), TrainError> {
    if data.sample_shape() != model.input_shape() {
        return Err(TrainError::Config(format!(
            "sample shape {:?} does not match model input {:?}",
            data.sample_shape(),
            model.input_shape()
        )));
    }
    Ok(())
}

/// Trains every parameter of `model`.
pub fn train<T: Scalar>(
    model: Model<T>,
    train_set: &Dataset<T>,
    dev_set: &Dataset<T>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError> {
    train_with(model, train_set, dev_set, config, |_| true)
}

/// Trains the parameters selected by `trainable`; the rest stay fixed.
pub fn train_with<T: Scalar>(
    mut model: Model<T>,
    train_set: &Dataset<T>,
    dev_set: &Dataset<T>,
    config: &TrainConfig,
    trainable: impl Fn(usize) -> bool,
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if dev_set.is_empty() {
        return Err(TrainError::EmptyDataset("development"));
    }
    check_input(&model, train_set)?;
    check_input(&model, dev_set)?;
    let c = model.n_classes();
    train_set.check_labels(c)?;
    dev_set.check_labels(c)?;

    let mask: Vec<bool> = (0..model.params().len()).map(&trainable).collect();
    let mut adam: Vec<AdamState<T>> = model.params().iter().map(|p| AdamState::zeros(p.value.len())).collect();
    let lr = T::from_f64_lossy(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(usize, f64, Model<T>)> = None;

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        let mut truth = Vec::with_capacity(order.len());
        let mut pred = Vec::with_capacity(order.len());
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let numeric = |source: TensorError| TrainError::Numeric {
                epoch,
                batch: b + 1,
                source,
            };
            let targets: Vec<usize> = batch.iter().map(|&i| train_set.labels()[i]).collect();
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, |i| mask[i]);
            let input = tape.constant(train_set.batch(batch));
            let logits = model.forward_on_tape(&mut tape, &vars, input).map_err(numeric)?;
            let (loss, probs) = tape.softmax_cross_entropy(logits, &targets).map_err(numeric)?;
            let loss_value = tape.value(loss).data()[0].to_f64_lossy();
            loss_sum += loss_value * batch.len() as f64;
            pred.extend(probs.data().chunks(c).map(argmax));
            truth.extend_from_slice(&targets);
            let mut grads = tape.backward(loss).map_err(numeric)?;
            for (i, var) in vars.iter().enumerate() {
                if !mask[i] {
                    continue;
                }
                let g = grads
                    .take(*var)
                    .ok_or_else(|| TensorError::Contract(format!("no gradient for parameter {i}")))?;
                let value = &mut model.params_mut()[i].value;
                match config.optimizer {
                    Optimizer::Sgd => sgd_step(value, &g, lr)?,
                    Optimizer::Adam { beta1, beta2, eps } => adam_step(
                        value,
                        &g,
                        &mut adam[i],
                        lr,
                        T::from_f64_lossy(beta1),
                        T::from_f64_lossy(beta2),
                        T::from_f64_lossy(eps),
                    )?,
                }
                if !value.is_finite() {
                    return Err(numeric(TensorError::NonFinite { op: "optimizer step" }));
                }
            }
            debug!("epoch {epoch} batch {} loss {loss_value:.6}", b + 1);
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_uar: metric(&truth, &pred, c)?,
            dev_uar: evaluate(&model, dev_set)?,
        };
        info!(
            "epoch {epoch}/{}: loss {:.4}, train UAR {:.2}, dev UAR {:.2}",
            config.epochs, record.train_loss, record.train_uar, record.dev_uar
        );
        if best.as_ref().is_none_or(|(_, uar, _)| record.dev_uar > *uar) {
            best = Some((epoch, record.dev_uar, model.clone()));
        }
        history.records.push(record);
    }
    let (best_epoch, best_dev_uar, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_dev_uar,
    })
}

/// Loads a checkpoint and fine-tunes it; see [`fine_tune_model`].
pub fn fine_tune<T: Scalar>(
    checkpoint: &Path,
    train_set: &Dataset<T>,
    dev_set: &Dataset<T>,
    config: &TrainConfig,
    new_n_classes: usize,
    freeze_backbone: bool,
) -> Result<TrainOutcome<T>, TrainError> {
    let (model, _) = load_checkpoint::<T>(checkpoint)?;
    fine_tune_model(model, train_set, dev_set, config, new_n_classes, freeze_backbone)
}

/// Continues training a pretrained model. A head with a different class
/// count is re-initialised from `config.seed`; with `freeze_backbone` only
/// the head is updated.
pub fn fine_tune_model<T: Scalar>(
    pretrained: Model<T>,
    train_set: &Dataset<T>,
    dev_set: &Dataset<T>,
    config: &TrainConfig,
    new_n_classes: usize,
    freeze_backbone: bool,
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    if new_n_classes < 2 {
        return Err(TrainError::Config(format!("need at least 2 classes, got {new_n_classes}")));
    }
    if !train_set.is_empty() && train_set.sample_shape() != pretrained.input_shape() {
        return Err(TrainError::Config(format!(
            "checkpoint expects input {:?}, data has {:?}",
            pretrained.input_shape(),
            train_set.sample_shape()
        )));
    }
    let model = if new_n_classes == pretrained.n_classes() {
        pretrained
    } else {
        let spec = pretrained.spec().clone().with_n_classes(new_n_classes);
        let mut fresh = Model::<T>::init(spec)?;
        fresh.reinit_head(config.seed);
        for (i, p) in pretrained.params().iter().enumerate() {
            if !pretrained.is_head_param(i) {
                fresh.params_mut()[i].value = p.value.clone();
            }
        }
        fresh
    };
    let head: Vec<bool> = (0..model.params().len()).map(|i| model.is_head_param(i)).collect();
    train_with(model, train_set, dev_set, config, |i| !freeze_backbone || head[i])
}
