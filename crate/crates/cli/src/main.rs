//! `deepself`: pre-processing, training, evaluation, prediction and late
//! fusion for signal classification, driven by an INI config plus flags.

mod commands;
mod config;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use deepself_core::eval::FusionMode;
use deepself_data::Split;

use crate::config::{Ini, RunConfig};

#[derive(Parser)]
#[command(name = "deepself", version, about = "Signal classification from raw data to fused predictions")]
#[command(after_help = "Values from --config are overridden by flags. Set DEEPSELF_LOG to error, info or debug.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one feature map (.dsfm) per manifest row plus a derived manifest.
    Preprocess(Shared),
    /// Train a model; writes best.ckpt and history.csv.
    Train(Shared),
    /// Print the confusion matrix and UAR of a checkpoint, or cross-validate with --cv.
    Evaluate {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Run k-fold cross-validation over the manifest's fold column.
        #[arg(long)]
        cv: bool,
        /// Rows to evaluate.
        #[arg(long, default_value = "all", value_parser = ["all", "train", "dev", "test"])]
        split: String,
    },
    /// Write predicted labels and class probabilities to predictions.csv.
    Predict {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Combine prediction files into fused.csv.
    Fuse {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "mean", value_parser = ["mean", "vote"])]
        mode: String,
        #[arg(long, default_value = "deepself-out")]
        output_dir: PathBuf,
    },
}

#[derive(Args)]
struct Shared {
    /// INI config with [general], [model], [nn], [cnn], [rnn], [preprocess], [data] and [run] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for initialisation, shuffling and dev sampling (integer >= 0).
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    /// Worker threads for loading and cross-validation (integer >= 1).
    #[arg(long)]
    jobs: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    /// Learning rate (> 0).
    #[arg(long, help_heading = "General")]
    learning_rate: Option<String>,
    /// Mini-batch size (integer >= 1).
    #[arg(long, help_heading = "General")]
    batch_size: Option<String>,
    /// Number of epochs (integer >= 1).
    #[arg(long, help_heading = "General")]
    epochs: Option<String>,
    #[arg(long, help_heading = "General", value_parser = ["sgd", "adam"])]
    optimizer: Option<String>,
    /// Hidden-layer activation.
    #[arg(long, help_heading = "General", value_parser = ["relu", "sigmoid", "tanh"])]
    activation: Option<String>,
    #[arg(long, help_heading = "Model", value_parser = ["nn", "cnn", "rnn", "cnn+rnn"])]
    model_type: Option<String>,
    /// Dense hidden layers (integer >= 1 for nn, >= 0 otherwise).
    #[arg(long, help_heading = "NN")]
    nn_hidden_layers: Option<String>,
    /// Nodes per dense hidden layer (integer >= 1).
    #[arg(long, help_heading = "NN")]
    nn_hidden_nodes: Option<String>,
    /// Output channels per conv layer, comma separated (integers >= 1).
    #[arg(long, help_heading = "CNN")]
    cnn_channels: Option<String>,
    /// Kernel size per conv layer, or one for all (integers >= 1).
    #[arg(long, help_heading = "CNN")]
    cnn_kernel: Option<String>,
    /// Stride per conv layer, or one for all (integers >= 1).
    #[arg(long, help_heading = "CNN")]
    cnn_stride: Option<String>,
    /// Padding per conv layer, or one for all (integers >= 0).
    #[arg(long, help_heading = "CNN")]
    cnn_padding: Option<String>,
    #[arg(long, help_heading = "RNN", value_parser = ["rnn", "lstm", "gru"])]
    rnn_type: Option<String>,
    #[arg(long, help_heading = "RNN", value_parser = ["uni", "bi"])]
    rnn_direction: Option<String>,
    /// Stacked recurrent layers (integer >= 1).
    #[arg(long, help_heading = "RNN")]
    rnn_hidden_layers: Option<String>,
    /// Hidden units per direction (integer >= 1).
    #[arg(long, help_heading = "RNN")]
    rnn_hidden_nodes: Option<String>,
    #[arg(long, help_heading = "Pre-processing", value_parser = ["on", "off"])]
    filter: Option<String>,
    /// Band-pass lower cut-off in Hz.
    #[arg(long, help_heading = "Pre-processing")]
    low_hz: Option<String>,
    /// Band-pass upper cut-off in Hz (below Nyquist).
    #[arg(long, help_heading = "Pre-processing")]
    high_hz: Option<String>,
    #[arg(long, help_heading = "Pre-processing", value_parser = ["none", "spectrogram", "logmel", "scalogram"])]
    feature: Option<String>,
    #[arg(long, help_heading = "Data")]
    manifest: Option<String>,
    /// Sample rate in Hz for CSV series.
    #[arg(long, help_heading = "Data")]
    sample_rate: Option<String>,
    /// Crop or zero-pad every 1-D signal to this many samples.
    #[arg(long, help_heading = "Data")]
    fixed_length: Option<String>,
    /// Fraction of training rows held out as dev set when the manifest has none, in (0, 1).
    #[arg(long, help_heading = "Data")]
    dev_fraction: Option<String>,
}

impl Shared {
    fn resolve(&self) -> Result<(RunConfig, Ini)> {
        let mut ini = match &self.config {
            Some(path) => Ini::load(path)?,
            None => Ini::default(),
        };
        let o = &self.overrides;
        let flags = [
            ("general", "learning_rate", &o.learning_rate),
            ("general", "batch_size", &o.batch_size),
            ("general", "epochs", &o.epochs),
            ("general", "optimizer", &o.optimizer),
            ("general", "activation", &o.activation),
            ("model", "type", &o.model_type),
            ("nn", "hidden_layers", &o.nn_hidden_layers),
            ("nn", "hidden_nodes", &o.nn_hidden_nodes),
            ("cnn", "channels", &o.cnn_channels),
            ("cnn", "kernel", &o.cnn_kernel),
            ("cnn", "stride", &o.cnn_stride),
            ("cnn", "padding", &o.cnn_padding),
            ("rnn", "type", &o.rnn_type),
            ("rnn", "direction", &o.rnn_direction),
            ("rnn", "hidden_layers", &o.rnn_hidden_layers),
            ("rnn", "hidden_nodes", &o.rnn_hidden_nodes),
            ("preprocess", "filter", &o.filter),
            ("preprocess", "low_hz", &o.low_hz),
            ("preprocess", "high_hz", &o.high_hz),
            ("preprocess", "feature", &o.feature),
            ("data", "manifest", &o.manifest),
            ("data", "sample_rate", &o.sample_rate),
            ("data", "fixed_length", &o.fixed_length),
            ("data", "dev_fraction", &o.dev_fraction),
            ("run", "seed", &self.seed),
            ("run", "output_dir", &self.output_dir),
            ("run", "jobs", &self.jobs),
        ];
        for (section, key, value) in flags {
            if let Some(v) = value {
                ini.set(section, key, v, &format!("--{}", key.replace('_', "-")))?;
            }
        }
        // relative manifest paths in a config file are relative to that file
        let mut cfg = RunConfig::from_ini(&ini)?;
        if o.manifest.is_none() {
            if let (Some(m), Some(dir)) = (&cfg.data.manifest, self.config.as_ref().and_then(|c| c.parent())) {
                cfg.data.manifest = Some(dir.join(m));
            }
        }
        Ok((cfg, ini))
    }
}

fn split_arg(s: &str) -> Option<Split> {
    Split::parse(s)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(shared) => commands::preprocess(&shared.resolve()?.0),
        Command::Train(shared) => {
            let (cfg, ini) = shared.resolve()?;
            commands::train_cmd(&cfg, &ini)
        }
        Command::Evaluate {
            shared,
            checkpoint,
            cv,
            split,
        } => commands::evaluate(&shared.resolve()?.0, checkpoint.as_deref(), split_arg(&split), cv),
        Command::Predict { shared, checkpoint } => commands::predict(&shared.resolve()?.0, &checkpoint),
        Command::Fuse {
            inputs,
            mode,
            output_dir,
        } => commands::fuse(&inputs, FusionMode::parse(&mode).expect("clap checked"), &output_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DEEPSELF_LOG", "info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
