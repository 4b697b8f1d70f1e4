use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use deepself_core::eval::{
    confusion_matrix, fuse_predictions, kfold_cross_validate, uar, write_fold_report, FoldedDataset, FusionMode,
    PredictionSet,
};
use deepself_core::tensor::argmax;
use deepself_core::train::{load_checkpoint, predict_probabilities, save_checkpoint, train, Metadata};
use deepself_core::{Dataset32, Model, Model32, Tensor};
use deepself_data::{load_manifest, write_manifest, Manifest, Split};
use deepself_dsp::write_feature_map;
use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Ini, RunConfig};
use crate::input::{load_map, load_tensor, InputSettings};

pub const CHECKPOINT: &str = "best.ckpt";
pub const HISTORY: &str = "history.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const FOLD_REPORT: &str = "folds.csv";
pub const FUSED: &str = "fused.csv";
pub const DERIVED_MANIFEST: &str = "manifest.csv";

fn manifest_path(cfg: &RunConfig) -> Result<&Path> {
    cfg.data
        .manifest
        .as_deref()
        .ok_or_else(|| anyhow!("no manifest given; set data.manifest or pass --manifest"))
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating output directory {}", cfg.output_dir.display()))?;
    Ok(&cfg.output_dir)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))
}

/// Instance ids: paths relative to the manifest's directory.
fn row_ids(manifest: &Manifest, manifest_path: &Path) -> Vec<String> {
    let base = manifest_path.parent().unwrap_or(Path::new(""));
    manifest
        .rows
        .iter()
        .map(|r| r.path.strip_prefix(base).unwrap_or(&r.path).to_string_lossy().into_owned())
        .collect()
}

/// Loads the listed rows in parallel and checks they share one shape.
fn load_rows(manifest: &Manifest, rows: &[usize], settings: &InputSettings, jobs: usize) -> Result<Vec<Tensor<f32>>> {
    let tensors = pool(jobs)?.install(|| {
        rows.par_iter()
            .map(|&i| load_tensor(&manifest.rows[i].path, settings))
            .collect::<Result<Vec<_>>>()
    })?;
    if let Some(first) = tensors.first() {
        for (t, &i) in tensors.iter().zip(rows) {
            if t.shape() != first.shape() {
                bail!(
                    "{}: input shape {:?} differs from {:?} ({}); set data.fixed_length to crop or pad signals",
                    manifest.rows[i].path.display(),
                    t.shape(),
                    first.shape(),
                    manifest.rows[rows[0]].path.display()
                );
            }
        }
    }
    Ok(tensors)
}

fn dataset(tensors: &[Tensor<f32>], labels: Vec<usize>) -> Result<Dataset32> {
    Ok(Dataset32::new(tensors, labels)?)
}

pub fn preprocess(cfg: &RunConfig) -> Result<()> {
    let manifest_path = manifest_path(cfg)?;
    let manifest = load_manifest(manifest_path)?;
    let out = output_dir(cfg)?;
    let features = out.join("features");
    std::fs::create_dir_all(&features)?;
    let settings = InputSettings::new(&cfg.preprocess, &cfg.data);
    let written = pool(cfg.jobs)?.install(|| {
        manifest
            .rows
            .par_iter()
            .enumerate()
            .map(|(i, row)| {
                let map = load_map(&row.path, &settings).with_context(|| format!("preprocessing {}", row.path.display()))?;
                let stem = row.path.file_stem().and_then(|s| s.to_str()).unwrap_or("sample");
                let target = features.join(format!("{i:05}-{stem}.dsfm"));
                write_feature_map(&map, &target)?;
                Ok((target, row.label.clone(), row.split, row.fold))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let derived = Manifest::from_rows(written);
    write_manifest(&derived, &out.join(DERIVED_MANIFEST))?;
    println!("wrote {} feature maps and {}", derived.len(), out.join(DERIVED_MANIFEST).display());
    Ok(())
}

/// Train and dev row indices from the split column or `dev_fraction`.
fn train_dev_rows(manifest: &Manifest, cfg: &RunConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let of = |s: Split| -> Vec<usize> { (0..manifest.len()).filter(|&i| manifest.rows[i].split == Some(s)).collect() };
    let (mut train_rows, dev_rows) = if manifest.has_splits() {
        (of(Split::Train), of(Split::Dev))
    } else {
        ((0..manifest.len()).collect(), Vec::new())
    };
    if !dev_rows.is_empty() {
        return Ok((train_rows, dev_rows));
    }
    let Some(fraction) = cfg.data.dev_fraction else {
        bail!("manifest has no dev rows; add a split column with dev rows or pass --dev-fraction");
    };
    train_rows.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.train.seed));
    let n_dev = ((train_rows.len() as f64 * fraction).ceil() as usize).clamp(1, train_rows.len().saturating_sub(1));
    let mut dev = train_rows.split_off(train_rows.len() - n_dev);
    train_rows.sort_unstable();
    dev.sort_unstable();
    Ok((train_rows, dev))
}

fn checkpoint_metadata(cfg: &RunConfig, ini: &Ini, classes: &[String]) -> Metadata {
    let mut meta = Metadata::new();
    meta.insert("classes".into(), classes.join(","));
    meta.insert("train_config".into(), cfg.train.digest());
    for (k, v) in ini.section("preprocess") {
        meta.insert(format!("preprocess.{k}"), v);
    }
    for (k, v) in ini.section("data") {
        if k == "sample_rate" || k == "fixed_length" {
            meta.insert(format!("data.{k}"), v);
        }
    }
    meta
}

/// Model, class names and input settings stored in a checkpoint.
fn open_checkpoint(path: &Path) -> Result<(Model32, Vec<String>, InputSettings)> {
    let (model, meta) = load_checkpoint::<f32>(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let classes: Vec<String> = match meta.get("classes") {
        Some(c) => c.split(',').map(str::to_string).collect(),
        None => (0..model.n_classes()).map(|c| c.to_string()).collect(),
    };
    if classes.len() != model.n_classes() {
        bail!(
            "{}: {} class names for a {}-class model",
            path.display(),
            classes.len(),
            model.n_classes()
        );
    }
    let mut ini = Ini::default();
    for (key, value) in &meta {
        if let Some((section, key)) = key.split_once('.') {
            ini.set(section, key, value, &path.display().to_string())?;
        }
    }
    let stored = RunConfig::from_ini(&ini)?;
    Ok((model, classes, InputSettings::new(&stored.preprocess, &stored.data)))
}

pub fn train_cmd(cfg: &RunConfig, ini: &Ini) -> Result<()> {
    let manifest = load_manifest(manifest_path(cfg)?)?;
    if let Some(bad) = manifest.classes.iter().find(|c| c.contains(',')) {
        bail!("label '{bad}' contains a comma");
    }
    let (train_rows, dev_rows) = train_dev_rows(&manifest, cfg)?;
    if train_rows.is_empty() {
        bail!("manifest has no training rows");
    }
    let settings = InputSettings::new(&cfg.preprocess, &cfg.data);
    let all: Vec<usize> = train_rows.iter().chain(&dev_rows).copied().collect();
    let tensors = load_rows(&manifest, &all, &settings, cfg.jobs)?;
    let (train_x, dev_x) = tensors.split_at(train_rows.len());
    let labels = |rows: &[usize]| rows.iter().map(|&i| manifest.rows[i].class).collect::<Vec<_>>();
    let train_set = dataset(train_x, labels(&train_rows))?;
    let dev_set = dataset(dev_x, labels(&dev_rows))?;
    info!(
        "{} train / {} dev instances of shape {:?}, {} classes",
        train_set.len(),
        dev_set.len(),
        train_set.sample_shape(),
        manifest.classes.len()
    );

    let spec = cfg.model_spec(train_set.sample_shape(), manifest.classes.len());
    let model = Model::init(spec)?;
    let outcome = train(model, &train_set, &dev_set, &cfg.train)?;

    let out = output_dir(cfg)?;
    let mut meta = checkpoint_metadata(cfg, ini, &manifest.classes);
    meta.insert("best_epoch".into(), outcome.best_epoch.to_string());
    meta.insert("best_dev_uar".into(), outcome.best_dev_uar.to_string());
    save_checkpoint(&outcome.model, &meta, &out.join(CHECKPOINT))?;
    outcome.history.write_csv(&out.join(HISTORY))?;
    let last = outcome.history.records.last().map_or(f64::NAN, |r| r.dev_uar);
    println!("final dev UAR: {last:.2}");
    println!("best dev UAR: {:.2} (epoch {})", outcome.best_dev_uar, outcome.best_epoch);
    println!("wrote {} and {}", out.join(CHECKPOINT).display(), out.join(HISTORY).display());
    Ok(())
}

fn rows_of(manifest: &Manifest, split: Option<Split>) -> Vec<usize> {
    (0..manifest.len())
        .filter(|&i| split.is_none() || manifest.rows[i].split == split)
        .collect()
}

pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>, split: Option<Split>, cv: bool) -> Result<()> {
    let manifest_path = manifest_path(cfg)?;
    let manifest = load_manifest(manifest_path)?;
    if cv {
        return cross_validate(cfg, &manifest, manifest_path);
    }
    let checkpoint = checkpoint.ok_or_else(|| anyhow!("evaluate needs --checkpoint (or --cv)"))?;
    let (model, classes, settings) = open_checkpoint(checkpoint)?;
    let rows = rows_of(&manifest, split);
    if rows.is_empty() {
        bail!("manifest has no rows in the requested split");
    }
    let truth = rows
        .iter()
        .map(|&i| {
            let label = &manifest.rows[i].label;
            classes.iter().position(|c| c == label).ok_or_else(|| {
                anyhow!(
                    "label '{label}' is not a checkpoint class ({{{}}})",
                    classes.join(", ")
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tensors = load_rows(&manifest, &rows, &settings, cfg.jobs)?;
    check_input(&model, &tensors[0])?;
    let probs = predict_probabilities(&model, &dataset(&tensors, truth.clone())?)?;
    let pred: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let cm = confusion_matrix(&truth, &pred, classes.len())?;
    println!("confusion matrix (rows: truth, columns: prediction)");
    println!("{:>12} {}", "", classes.iter().map(|c| format!("{c:>8}")).collect::<String>());
    for (c, row) in classes.iter().zip(cm.rows()) {
        println!("{c:>12} {}", row.iter().map(|n| format!("{n:>8}")).collect::<String>());
    }
    println!("UAR: {:.2}", uar(&cm)?);
    Ok(())
}

fn cross_validate(cfg: &RunConfig, manifest: &Manifest, manifest_path: &Path) -> Result<()> {
    if let Some(row) = manifest.rows.iter().find(|r| r.fold.is_none()) {
        bail!("--cv needs a fold for every row; {} has none", row.path.display());
    }
    let rows: Vec<usize> = (0..manifest.len()).collect();
    let settings = InputSettings::new(&cfg.preprocess, &cfg.data);
    let tensors = load_rows(manifest, &rows, &settings, cfg.jobs)?;
    let labels = manifest.rows.iter().map(|r| r.class).collect();
    let folds = manifest.rows.iter().map(|r| r.fold.unwrap_or_default()).collect();
    let folded = FoldedDataset::new(dataset(&tensors, labels)?, row_ids(manifest, manifest_path), folds)?;
    let spec = cfg.model_spec(folded.data.sample_shape(), manifest.classes.len());
    let report = kfold_cross_validate(&folded, &spec, &cfg.train, cfg.jobs)?;
    for f in &report.folds {
        println!("fold {}: test UAR {:.2} (dev fold {}, best epoch {})", f.fold, f.test_uar, f.dev_fold, f.best_epoch);
    }
    println!("mean UAR: {:.2}", report.mean_uar);
    let path = output_dir(cfg)?.join(FOLD_REPORT);
    write_fold_report(&report, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn check_input(model: &Model32, sample: &Tensor<f32>) -> Result<()> {
    if sample.shape() != model.input_shape() {
        bail!(
            "input shape {:?} does not match the checkpoint's expected input {:?}",
            sample.shape(),
            model.input_shape()
        );
    }
    Ok(())
}

pub fn predict(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let manifest_path = manifest_path(cfg)?;
    let manifest = load_manifest(manifest_path)?;
    let (model, _, settings) = open_checkpoint(checkpoint)?;
    let rows: Vec<usize> = (0..manifest.len()).collect();
    let tensors = load_rows(&manifest, &rows, &settings, cfg.jobs)?;
    check_input(&model, &tensors[0])?;
    let probs = predict_probabilities(&model, &dataset(&tensors, vec![0; tensors.len()])?)?;
    let set = PredictionSet::from_probabilities(row_ids(&manifest, manifest_path), probs)?;
    let path = output_dir(cfg)?.join(PREDICTIONS);
    set.write_csv(&path)?;
    println!("wrote {} predictions to {}", set.len(), path.display());
    Ok(())
}

pub fn fuse(inputs: &[PathBuf], mode: FusionMode, out: &Path) -> Result<()> {
    let sets = inputs
        .iter()
        .map(|p| PredictionSet::read_csv(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse_predictions(&sets, mode)?;
    std::fs::create_dir_all(out)?;
    let path = out.join(FUSED);
    fused.write_csv(&path)?;
    println!("wrote {} fused predictions to {}", fused.len(), path.display());
    Ok(())
}
