//! Declarative topology descriptions and their text form.
//!
//! The text form is line based, one `key = value` per line, and is what
//! checkpoints embed:
//!
//! ```text
//! input_shape = 1,100
//! n_classes = 2
//! activation = relu
//! seed = 7
//! layer = conv rank=1 out_channels=8 kernel=5 stride=2 padding=0
//! layer = recurrent cell=gru hidden_nodes=16 layers=2 direction=bi
//! layer = dense hidden_nodes=2
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, TensorError};
use crate::tape::Activation;

/// Recurrent cell family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Rnn, CellKind::Lstm, CellKind::Gru];

    /// Number of gate blocks packed into the cell's weight matrices.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Rnn => "rnn",
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Uni,
    Bi,
}

impl Direction {
    pub fn count(self) -> usize {
        match self {
            Direction::Uni => 1,
            Direction::Bi => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Uni => "uni",
            Direction::Bi => "bi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uni" => Some(Direction::Uni),
            "bi" => Some(Direction::Bi),
            _ => None,
        }
    }
}

/// One user-declared stage of a model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        hidden_nodes: usize,
    },
    Conv {
        rank: usize,
        out_channels: usize,
        kernel: Vec<usize>,
        stride: Vec<usize>,
        padding: Vec<usize>,
    },
    Recurrent {
        cell: CellKind,
        hidden_nodes: usize,
        layers: usize,
        direction: Direction,
    },
    Flatten,
    CnnToRnnReshape,
}

impl LayerSpec {
    pub fn dense(hidden_nodes: usize) -> Self {
        LayerSpec::Dense { hidden_nodes }
    }

    /// Convolution with the same kernel/stride/padding on every spatial axis.
    pub fn conv(rank: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv {
            rank,
            out_channels,
            kernel: vec![kernel; rank],
            stride: vec![stride; rank],
            padding: vec![padding; rank],
        }
    }

    pub fn recurrent(cell: CellKind, hidden_nodes: usize, layers: usize, direction: Direction) -> Self {
        LayerSpec::Recurrent {
            cell,
            hidden_nodes,
            layers,
            direction,
        }
    }
}

/// A complete model description: input, layer stack, class count.
///
/// Sample shapes are channel-first with time on the last axis, e.g.
/// `[channels, samples]` for raw signals or `[channels, freq, frames]` for
/// feature maps. The last layer must be a `Dense` producing `n_classes` logits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub n_classes: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(input_shape: impl Into<Vec<usize>>, layers: Vec<LayerSpec>, n_classes: usize) -> Self {
        Self {
            input_shape: input_shape.into(),
            layers,
            n_classes,
            activation: Activation::Relu,
            seed: 0,
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Same topology with the classifier head resized to `n_classes`.
    pub fn with_n_classes(mut self, n_classes: usize) -> Self {
        if let Some(LayerSpec::Dense { hidden_nodes }) = self.layers.last_mut() {
            *hidden_nodes = n_classes;
        }
        self.n_classes = n_classes;
        self
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { hidden_nodes } => write!(f, "dense hidden_nodes={hidden_nodes}"),
            LayerSpec::Conv {
                rank,
                out_channels,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv rank={rank} out_channels={out_channels} kernel={} stride={} padding={}",
                join(kernel),
                join(stride),
                join(padding)
            ),
            LayerSpec::Recurrent {
                cell,
                hidden_nodes,
                layers,
                direction,
            } => write!(
                f,
                "recurrent cell={} hidden_nodes={hidden_nodes} layers={layers} direction={}",
                cell.name(),
                direction.name()
            ),
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::CnnToRnnReshape => f.write_str("cnn_to_rnn"),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input_shape = {}", join(&self.input_shape))?;
        writeln!(f, "n_classes = {}", self.n_classes)?;
        writeln!(f, "activation = {}", self.activation.name())?;
        writeln!(f, "seed = {}", self.seed)?;
        for layer in &self.layers {
            writeln!(f, "layer = {layer}")?;
        }
        Ok(())
    }
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Config(msg.into())
}

fn parse_num<N: FromStr>(key: &str, s: &str) -> Result<N> {
    s.trim()
        .parse()
        .map_err(|_| bad(format!("{key}: '{s}' is not a non-negative integer")))
}

fn parse_list(key: &str, s: &str) -> Result<Vec<usize>> {
    s.split(',').map(|p| parse_num(key, p)).collect()
}

impl FromStr for LayerSpec {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        let mut words = s.split_whitespace();
        let kind = words.next().ok_or_else(|| bad("empty layer description"))?;
        let mut fields = std::collections::BTreeMap::new();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| bad(format!("layer field '{w}' is not key=value")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| bad(format!("{kind} layer is missing '{k}'")))
        };
        Ok(match kind {
            "dense" => LayerSpec::Dense {
                hidden_nodes: parse_num("hidden_nodes", get("hidden_nodes")?)?,
            },
            "conv" => LayerSpec::Conv {
                rank: parse_num("rank", get("rank")?)?,
                out_channels: parse_num("out_channels", get("out_channels")?)?,
                kernel: parse_list("kernel", get("kernel")?)?,
                stride: parse_list("stride", get("stride")?)?,
                padding: parse_list("padding", get("padding")?)?,
            },
            "recurrent" => LayerSpec::Recurrent {
                cell: CellKind::parse(get("cell")?)
                    .ok_or_else(|| bad("cell must be one of: rnn, lstm, gru"))?,
                hidden_nodes: parse_num("hidden_nodes", get("hidden_nodes")?)?,
                layers: parse_num("layers", get("layers")?)?,
                direction: Direction::parse(get("direction")?)
                    .ok_or_else(|| bad("direction must be one of: uni, bi"))?,
            },
            "flatten" => LayerSpec::Flatten,
            "cnn_to_rnn" => LayerSpec::CnnToRnnReshape,
            other => return Err(bad(format!("unknown layer kind '{other}'"))),
        })
    }
}

impl FromStr for ModelSpec {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = ModelSpec::new(Vec::new(), Vec::new(), 0);
        let (mut saw_shape, mut saw_classes) = (false, false);
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| bad(format!("model spec line '{line}' is not key = value")))?;
            match key {
                "input_shape" => {
                    spec.input_shape = parse_list(key, value)?;
                    saw_shape = true;
                }
                "n_classes" => {
                    spec.n_classes = parse_num(key, value)?;
                    saw_classes = true;
                }
                "activation" => {
                    spec.activation = Activation::parse(value)
                        .ok_or_else(|| bad("activation must be one of: relu, sigmoid, tanh"))?
                }
                "seed" => spec.seed = parse_num(key, value)?,
                "layer" => spec.layers.push(value.parse()?),
                other => return Err(bad(format!("unknown model spec key '{other}'"))),
            }
        }
        if !saw_shape || !saw_classes {
            return Err(bad("model spec needs input_shape and n_classes"));
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let spec = ModelSpec::new(
            vec![1, 100],
            vec![
                LayerSpec::conv(1, 8, 5, 2, 0),
                LayerSpec::Conv {
                    rank: 2,
                    out_channels: 3,
                    kernel: vec![3, 1],
                    stride: vec![1, 2],
                    padding: vec![0, 1],
                },
                LayerSpec::CnnToRnnReshape,
                LayerSpec::recurrent(CellKind::Gru, 16, 2, Direction::Bi),
                LayerSpec::Flatten,
                LayerSpec::dense(2),
            ],
            2,
        )
        .with_activation(Activation::Tanh)
        .with_seed(99);
        let parsed: ModelSpec = spec.to_string().parse().unwrap();
        assert_eq!(parsed, spec);
    }

    #[test]
    fn rejects_unknown_values() {
        assert!("input_shape = 1\nn_classes = 2\nlayer = recurrent cell=nadam hidden_nodes=1 layers=1 direction=uni"
            .parse::<ModelSpec>()
            .is_err());
        assert!("n_classes = 2".parse::<ModelSpec>().is_err());
        assert!("input_shape = 1,x\nn_classes = 2".parse::<ModelSpec>().is_err());
    }
}
