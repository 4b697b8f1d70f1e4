//! Run configuration: an INI-style file (`[section]` + `key = value`),
//! overridden by command-line flags, validated before any work starts.
//!
//! Precedence, lowest first: built-in defaults, config file, flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use deepself_core::model::{CellKind, Direction, LayerSpec, ModelSpec};
use deepself_core::train::{Optimizer, TrainConfig};
use deepself_core::Activation;

/// Every accepted `section.key`.
pub const KEYS: &[(&str, &[&str])] = &[
    ("general", &["learning_rate", "batch_size", "epochs", "optimizer", "activation"]),
    ("model", &["type"]),
    ("nn", &["hidden_layers", "hidden_nodes"]),
    ("cnn", &["channels", "kernel", "stride", "padding"]),
    ("rnn", &["type", "direction", "hidden_layers", "hidden_nodes"]),
    (
        "preprocess",
        &["filter", "low_hz", "high_hz", "feature", "window_ms", "hop_ms", "n_mels", "fmin", "fmax", "voices"],
    ),
    ("data", &["manifest", "sample_rate", "fixed_length", "dev_fraction"]),
    ("run", &["seed", "output_dir", "jobs"]),
];

pub const MODEL_TYPES: [&str; 4] = ["nn", "cnn", "rnn", "cnn+rnn"];
pub const RNN_TYPES: [&str; 3] = ["rnn", "lstm", "gru"];
pub const DIRECTIONS: [&str; 2] = ["uni", "bi"];
pub const FEATURES: [&str; 4] = ["none", "spectrogram", "logmel", "scalogram"];
pub const SWITCH: [&str; 2] = ["on", "off"];
pub const ACTIVATIONS: [&str; 3] = ["relu", "sigmoid", "tanh"];

/// Raw `section.key → value` pairs with where each came from.
#[derive(Clone, Debug, Default)]
pub struct Ini {
    values: BTreeMap<(String, String), (String, String)>,
}

impl Ini {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            let at = format!("{origin}:{}", n + 1);
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{at}: expected `key = value` or `[section]`, got '{line}'"))?;
            let section = section
                .clone()
                .ok_or_else(|| anyhow!("{at}: key '{}' appears before any [section]", key.trim()))?;
            ini.set(&section, key.trim(), value.trim(), &at)?;
        }
        Ok(ini)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str, origin: &str) -> Result<()> {
        let known = KEYS
            .iter()
            .find(|(s, _)| *s == section)
            .ok_or_else(|| anyhow!("{origin}: unknown section [{section}]"))?;
        if !known.1.contains(&key) {
            bail!(
                "{origin}: unknown key '{key}' in [{section}] (expected one of: {})",
                known.1.join(", ")
            );
        }
        self.values
            .insert((section.into(), key.into()), (value.into(), origin.into()));
        Ok(())
    }

    fn get(&self, section: &str, key: &str) -> Option<(&str, &str)> {
        self.values
            .get(&(section.to_string(), key.to_string()))
            .map(|(v, o)| (v.as_str(), o.as_str()))
    }

    /// Entries of one section, for storing alongside a checkpoint.
    pub fn section(&self, section: &str) -> Vec<(String, String)> {
        self.values
            .iter()
            .filter(|((s, _), _)| s == section)
            .map(|((_, k), (v, _))| (k.clone(), v.clone()))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Nn,
    Cnn,
    Rnn,
    CnnRnn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    None,
    Spectrogram,
    LogMel,
    Scalogram,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnConfig {
    pub channels: Vec<usize>,
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnConfig {
    pub cell: CellKind,
    pub direction: Direction,
    pub hidden_layers: usize,
    pub hidden_nodes: usize,
}

/// Signal conditioning applied to every 1-D input.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocess {
    /// Band-pass cut-offs in Hz when filtering is on.
    pub filter: Option<(f64, f64)>,
    pub feature: Feature,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub fmin: Option<f64>,
    pub fmax: Option<f64>,
    pub voices: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub sample_rate: Option<f64>,
    pub fixed_length: Option<usize>,
    pub dev_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub activation: Activation,
    pub model: ModelKind,
    pub nn_hidden_layers: usize,
    pub nn_hidden_nodes: usize,
    pub cnn: CnnConfig,
    pub rnn: RnnConfig,
    pub preprocess: Preprocess,
    pub data: DataConfig,
    pub output_dir: PathBuf,
    pub jobs: usize,
}

fn one_of<'a>(key: &str, value: &str, domain: &[&'a str]) -> Result<&'a str> {
    domain
        .iter()
        .find(|d| **d == value)
        .copied()
        .ok_or_else(|| anyhow!("{key} must be one of {{{}}}, got '{value}'", domain.join(", ")))
}

struct Reader<'a>(&'a Ini);

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<(&str, String)> {
        self.0.get(section, key).map(|(v, o)| (v, format!("{o}: {section}.{key}")))
    }

    fn choice<'d>(&self, section: &str, key: &str, domain: &[&'d str], default: &'d str) -> Result<&'d str> {
        match self.raw(section, key) {
            Some((v, at)) => one_of(&at, v, domain),
            None => Ok(default),
        }
    }

    fn count(&self, section: &str, key: &str, default: usize, min: usize) -> Result<usize> {
        let Some((v, at)) = self.raw(section, key) else {
            return Ok(default);
        };
        match v.parse::<usize>() {
            Ok(n) if n >= min => Ok(n),
            _ => bail!("{at} must be an integer >= {min}, got '{v}'"),
        }
    }

    fn positive(&self, section: &str, key: &str) -> Result<Option<f64>> {
        let Some((v, at)) = self.raw(section, key) else {
            return Ok(None);
        };
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() && x > 0.0 => Ok(Some(x)),
            _ => bail!("{at} must be a positive number, got '{v}'"),
        }
    }

    fn non_negative(&self, section: &str, key: &str) -> Result<Option<f64>> {
        let Some((v, at)) = self.raw(section, key) else {
            return Ok(None);
        };
        match v.parse::<f64>() {
            Ok(x) if x.is_finite() && x >= 0.0 => Ok(Some(x)),
            _ => bail!("{at} must be a number >= 0, got '{v}'"),
        }
    }

    fn list(&self, section: &str, key: &str, default: &[usize], min: usize) -> Result<Vec<usize>> {
        let Some((v, at)) = self.raw(section, key) else {
            return Ok(default.to_vec());
        };
        v.split(',')
            .map(|p| match p.trim().parse::<usize>() {
                Ok(n) if n >= min => Ok(n),
                _ => bail!("{at} must be a comma list of integers >= {min}, got '{v}'"),
            })
            .collect()
    }
}

impl RunConfig {
    pub fn from_ini(ini: &Ini) -> Result<Self> {
        let r = Reader(ini);
        let mut train = TrainConfig {
            learning_rate: r.positive("general", "learning_rate")?.unwrap_or(0.001),
            batch_size: r.count("general", "batch_size", 32, 1)?,
            epochs: r.count("general", "epochs", 10, 1)?,
            optimizer: Optimizer::parse(r.choice("general", "optimizer", &Optimizer::NAMES, "adam")?)
                .expect("domain checked"),
            ..TrainConfig::default()
        };
        let activation = Activation::parse(r.choice("general", "activation", &ACTIVATIONS, "relu")?).expect("domain checked");
        let model = match r.choice("model", "type", &MODEL_TYPES, "nn")? {
            "nn" => ModelKind::Nn,
            "cnn" => ModelKind::Cnn,
            "rnn" => ModelKind::Rnn,
            _ => ModelKind::CnnRnn,
        };
        // a plain NN needs at least one hidden layer; elsewhere the dense
        // layers between backbone and classifier are optional
        let min_dense = usize::from(model == ModelKind::Nn);
        let nn_hidden_layers = r.count("nn", "hidden_layers", 1, min_dense)?;
        let nn_hidden_nodes = r.count("nn", "hidden_nodes", 64, 1)?;

        let channels = r.list("cnn", "channels", &[8, 16], 1)?;
        let per_layer = |key: &str, default: usize, min: usize| -> Result<Vec<usize>> {
            let v = r.list("cnn", key, &[default], min)?;
            match v.len() {
                1 => Ok(vec![v[0]; channels.len()]),
                n if n == channels.len() => Ok(v),
                n => bail!("cnn.{key} has {n} entries but cnn.channels has {}", channels.len()),
            }
        };
        let cnn = CnnConfig {
            kernel: per_layer("kernel", 3, 1)?,
            stride: per_layer("stride", 1, 1)?,
            padding: per_layer("padding", 1, 0)?,
            channels: channels.clone(),
        };
        let rnn = RnnConfig {
            cell: CellKind::parse(r.choice("rnn", "type", &RNN_TYPES, "gru")?).expect("domain checked"),
            direction: Direction::parse(r.choice("rnn", "direction", &DIRECTIONS, "bi")?).expect("domain checked"),
            hidden_layers: r.count("rnn", "hidden_layers", 1, 1)?,
            hidden_nodes: r.count("rnn", "hidden_nodes", 32, 1)?,
        };

        let filter = match r.choice("preprocess", "filter", &SWITCH, "off")? {
            "on" => {
                let low = r.positive("preprocess", "low_hz")?;
                let high = r.positive("preprocess", "high_hz")?;
                match (low, high) {
                    (Some(l), Some(h)) if l < h => Some((l, h)),
                    (Some(l), Some(h)) => bail!("preprocess: low must be < high (low_hz {l}, high_hz {h})"),
                    _ => bail!("preprocess.filter = on needs low_hz and high_hz"),
                }
            }
            _ => None,
        };
        let feature = match r.choice("preprocess", "feature", &FEATURES, "none")? {
            "none" => Feature::None,
            "spectrogram" => Feature::Spectrogram,
            "logmel" => Feature::LogMel,
            _ => Feature::Scalogram,
        };
        let preprocess = Preprocess {
            filter,
            feature,
            window_ms: r.positive("preprocess", "window_ms")?.unwrap_or(25.0),
            hop_ms: r.positive("preprocess", "hop_ms")?.unwrap_or(10.0),
            n_mels: r.count("preprocess", "n_mels", 64, 1)?,
            fmin: r.non_negative("preprocess", "fmin")?,
            fmax: r.positive("preprocess", "fmax")?,
            voices: r.count("preprocess", "voices", 8, 1)?,
        };

        let dev_fraction = r.positive("data", "dev_fraction")?;
        if let Some(f) = dev_fraction.filter(|f| *f >= 1.0) {
            bail!("data.dev_fraction must lie in (0, 1), got {f}");
        }
        let data = DataConfig {
            manifest: r.raw("data", "manifest").map(|(v, _)| PathBuf::from(v)),
            sample_rate: r.positive("data", "sample_rate")?,
            fixed_length: r.raw("data", "fixed_length").map(|_| r.count("data", "fixed_length", 0, 1)).transpose()?,
            dev_fraction,
        };

        train.seed = r.count("run", "seed", 0, 0)? as u64;
        let output_dir = PathBuf::from(r.raw("run", "output_dir").map_or("deepself-out", |(v, _)| v));
        let jobs = r.count("run", "jobs", 1, 1)?;
        Ok(Self {
            train,
            activation,
            model,
            nn_hidden_layers,
            nn_hidden_nodes,
            cnn,
            rnn,
            preprocess,
            data,
            output_dir,
            jobs,
        })
    }

    /// Layer stack for inputs of `input_shape` (batch axis excluded).
    pub fn model_spec(&self, input_shape: &[usize], n_classes: usize) -> ModelSpec {
        let mut layers = Vec::new();
        if matches!(self.model, ModelKind::Cnn | ModelKind::CnnRnn) {
            let rank = input_shape.len().saturating_sub(1).max(1);
            for i in 0..self.cnn.channels.len() {
                layers.push(LayerSpec::conv(
                    rank,
                    self.cnn.channels[i],
                    self.cnn.kernel[i],
                    self.cnn.stride[i],
                    self.cnn.padding[i],
                ));
            }
        }
        if matches!(self.model, ModelKind::Rnn | ModelKind::CnnRnn) {
            layers.push(LayerSpec::recurrent(
                self.rnn.cell,
                self.rnn.hidden_nodes,
                self.rnn.hidden_layers,
                self.rnn.direction,
            ));
        }
        for _ in 0..self.nn_hidden_layers {
            layers.push(LayerSpec::dense(self.nn_hidden_nodes));
        }
        layers.push(LayerSpec::dense(n_classes));
        ModelSpec::new(input_shape.to_vec(), layers, n_classes)
            .with_activation(self.activation)
            .with_seed(self.train.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<RunConfig> {
        RunConfig::from_ini(&Ini::parse(text, "test.cfg")?)
    }

    #[test]
    fn defaults() {
        let c = cfg("").unwrap();
        assert_eq!(c.train, TrainConfig::default());
        assert_eq!(c.model, ModelKind::Nn);
        assert_eq!(c.preprocess.feature, Feature::None);
        assert_eq!(c.jobs, 1);
    }

    #[test]
    fn eeg_gru_topology() {
        let c = cfg("[model]\ntype = rnn\n[rnn]\ntype = gru\ndirection = bi\nhidden_layers = 2\n[nn]\nhidden_layers = 0\n")
            .unwrap();
        let spec = c.model_spec(&[1, 64], 2);
        assert_eq!(
            spec.layers,
            [LayerSpec::recurrent(CellKind::Gru, 32, 2, Direction::Bi), LayerSpec::dense(2)]
        );
    }

    #[test]
    fn cnn_lists_broadcast() {
        let c = cfg("[model]\ntype=cnn\n[cnn]\nchannels = 4, 8, 8\nstride = 2\npadding = 0,1,1\n").unwrap();
        assert_eq!(c.cnn.stride, [2, 2, 2]);
        assert_eq!(c.cnn.padding, [0, 1, 1]);
        let spec = c.model_spec(&[1, 20, 30], 3);
        assert_eq!(spec.layers[0], LayerSpec::conv(2, 4, 3, 2, 0));
        assert!(cfg("[cnn]\nchannels = 4, 8\nkernel = 3,3,3\n").is_err());
    }

    #[test]
    fn out_of_domain_values_list_the_domain() {
        let err = cfg("[general]\noptimizer = nadam\n").unwrap_err().to_string();
        assert!(err.contains("{sgd, adam}"), "{err}");
        assert!(err.contains("test.cfg:2"), "{err}");
        let err = cfg("[rnn]\ntype = transformer\n").unwrap_err().to_string();
        assert!(err.contains("{rnn, lstm, gru}"), "{err}");
        for bad in [
            "[general]\nlearning_rate = -1",
            "[general]\nbatch_size = 0",
            "[nn]\nhidden_layers = 0",
            "[model]\ntype = svm",
            "[preprocess]\nfeature = mfcc",
            "[data]\ndev_fraction = 1.5",
        ] {
            assert!(cfg(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn filter_band_order() {
        let err = cfg("[preprocess]\nfilter = on\nlow_hz = 30\nhigh_hz = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("low must be < high"));
        let c = cfg("[preprocess]\nfilter = on\nlow_hz = 0.5\nhigh_hz = 30\n").unwrap();
        assert_eq!(c.preprocess.filter, Some((0.5, 30.0)));
    }

    #[test]
    fn syntax_errors() {
        assert!(Ini::parse("learning_rate = 1", "x").is_err());
        assert!(Ini::parse("[general]\nlearning_rate", "x").is_err());
        assert!(Ini::parse("[gen]\na = 1", "x").is_err());
        assert!(Ini::parse("[general]\nlr = 1", "x").is_err());
        let ini = Ini::parse("# c\n; c\n[run]\nseed = 7\n", "x").unwrap();
        assert_eq!(RunConfig::from_ini(&ini).unwrap().train.seed, 7);
    }
}
