use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::model::plan::{plan_shapes, ShapePlan, Stage};
use crate::model::recurrent::{bidirectional, run_sequence, CellVars};
use crate::model::spec::{CellKind, Direction, ModelSpec};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::{softmax_rows, Tensor};

/// How a parameter is initialised.
#[derive(Clone, Debug, PartialEq)]
enum Init {
    /// Uniform in ±√(6 / (fan_in + fan_out)).
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    /// Zeros except `[start, start + len)` set to one (LSTM forget gate).
    OnesIn(Range<usize>),
}

#[derive(Clone, Debug, PartialEq)]
struct ParamSlot {
    name: String,
    shape: Vec<usize>,
    init: Init,
    /// Index of the originating layer spec.
    layer: usize,
}

/// A named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub layer: usize,
    pub value: Tensor<T>,
}

/// An instantiated, shape-validated model.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    spec: ModelSpec,
    plan: ShapePlan,
    params: Vec<Param<T>>,
    /// Parameter index range consumed by each plan stage.
    stage_params: Vec<Range<usize>>,
}

fn layout(plan: &ShapePlan) -> (Vec<ParamSlot>, Vec<Range<usize>>) {
    let mut slots = Vec::new();
    let mut ranges = Vec::new();
    for planned in &plan.stages {
        let start = slots.len();
        match &planned.stage {
            Stage::Dense {
                layer, inputs, outputs, ..
            } => {
                slots.push(ParamSlot {
                    name: format!("layers.{layer}.weight"),
                    shape: vec![*inputs, *outputs],
                    init: Init::Glorot {
                        fan_in: *inputs,
                        fan_out: *outputs,
                    },
                    layer: *layer,
                });
                slots.push(ParamSlot {
                    name: format!("layers.{layer}.bias"),
                    shape: vec![*outputs],
                    init: Init::Zeros,
                    layer: *layer,
                });
            }
            Stage::Conv {
                layer,
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                let taps: usize = kernel.iter().product();
                let mut shape = vec![*out_channels, *in_channels];
                shape.extend_from_slice(kernel);
                slots.push(ParamSlot {
                    name: format!("layers.{layer}.weight"),
                    shape,
                    init: Init::Glorot {
                        fan_in: in_channels * taps,
                        fan_out: out_channels * taps,
                    },
                    layer: *layer,
                });
                slots.push(ParamSlot {
                    name: format!("layers.{layer}.bias"),
                    shape: vec![*out_channels],
                    init: Init::Zeros,
                    layer: *layer,
                });
            }
            Stage::Recurrent {
                layer,
                cell,
                inputs,
                hidden,
                layers,
                direction,
                ..
            } => {
                let g = cell.gates();
                for depth in 0..*layers {
                    let fan_in = if depth == 0 { *inputs } else { hidden * direction.count() };
                    for dir in ["fwd", "bwd"].iter().take(direction.count()) {
                        let prefix = format!("layers.{layer}.{depth}.{dir}");
                        slots.push(ParamSlot {
                            name: format!("{prefix}.w_x"),
                            shape: vec![fan_in, g * hidden],
                            init: Init::Glorot {
                                fan_in,
                                fan_out: *hidden,
                            },
                            layer: *layer,
                        });
                        slots.push(ParamSlot {
                            name: format!("{prefix}.w_h"),
                            shape: vec![*hidden, g * hidden],
                            init: Init::Glorot {
                                fan_in: *hidden,
                                fan_out: *hidden,
                            },
                            layer: *layer,
                        });
                        slots.push(ParamSlot {
                            name: format!("{prefix}.bias"),
                            shape: vec![g * hidden],
                            init: if *cell == CellKind::Lstm {
                                Init::OnesIn(*hidden..2 * hidden)
                            } else {
                                Init::Zeros
                            },
                            layer: *layer,
                        });
                    }
                }
            }
            Stage::Flatten | Stage::CnnToRnn => {}
        }
        ranges.push(start..slots.len());
    }
    (slots, ranges)
}

fn initialise<T: Scalar>(slot: &ParamSlot, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let n: usize = slot.shape.iter().product();
    let data = match &slot.init {
        Init::Glorot { fan_in, fan_out } => {
            let limit = (6.0 / (*fan_in + *fan_out) as f64).sqrt();
            (0..n).map(|_| T::from_f64_lossy(rng.gen_range(-limit..limit))).collect()
        }
        Init::Zeros => vec![T::zero(); n],
        Init::OnesIn(range) => (0..n)
            .map(|i| if range.contains(&i) { T::one() } else { T::zero() })
            .collect(),
    };
    Tensor::from_parts(slot.shape.clone(), data)
}

impl<T: Scalar> Model<T> {
    /// Plans `spec` and draws Glorot-uniform weights from its seed.
    pub fn init(spec: ModelSpec) -> Result<Self> {
        let plan = plan_shapes(&spec)?;
        let (slots, stage_params) = layout(&plan);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let params = slots
            .iter()
            .map(|slot| Param {
                name: slot.name.clone(),
                layer: slot.layer,
                value: initialise(slot, &mut rng),
            })
            .collect();
        Ok(Self {
            spec,
            plan,
            params,
            stage_params,
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes
    /// against what `spec` requires.
    pub fn from_params(spec: ModelSpec, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let plan = plan_shapes(&spec)?;
        let (slots, stage_params) = layout(&plan);
        if named.len() != slots.len() {
            return Err(TensorError::Contract(format!(
                "model needs {} parameter tensors, got {}",
                slots.len(),
                named.len()
            )));
        }
        let params = slots
            .iter()
            .zip(named)
            .map(|(slot, (name, value))| {
                if name != slot.name || value.shape() != slot.shape.as_slice() {
                    return Err(TensorError::Contract(format!(
                        "parameter '{name}' {:?} does not match expected '{}' {:?}",
                        value.shape(),
                        slot.name,
                        slot.shape
                    )));
                }
                Ok(Param {
                    name,
                    layer: slot.layer,
                    value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec,
            plan,
            params,
            stage_params,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn plan(&self) -> &ShapePlan {
        &self.plan
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    /// Index of the classifier head in `spec().layers`.
    pub fn head_layer(&self) -> usize {
        self.spec.layers.len() - 1
    }

    pub fn is_head_param(&self, index: usize) -> bool {
        self.params[index].layer == self.head_layer()
    }

    /// Re-draws the head parameters with Glorot init from `seed`.
    pub fn reinit_head(&mut self, seed: u64) {
        let (slots, _) = layout(&self.plan);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = self.head_layer();
        for (param, slot) in self.params.iter_mut().zip(&slots) {
            if slot.layer == head {
                param.value = initialise(slot, &mut rng);
            }
        }
    }

    /// Casts parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            spec: self.spec.clone(),
            plan: self.plan.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    layer: p.layer,
                    value: p.value.cast(),
                })
                .collect(),
            stage_params: self.stage_params.clone(),
        }
    }

    /// Registers every parameter on `tape`; `trainable(i)` decides which
    /// ones record gradients.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: impl Fn(usize) -> bool) -> Vec<Var> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.leaf(p.value.clone(), trainable(i)))
            .collect()
    }

    fn check_batch(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != self.spec.input_shape.len() + 1 || shape[1..] != self.spec.input_shape[..] {
            let mut expected = vec![0];
            expected.extend_from_slice(&self.spec.input_shape);
            return Err(TensorError::Contract(format!(
                "batch shape {shape:?} does not match expected [B, {}]",
                self.spec
                    .input_shape
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        Ok(())
    }

    /// Runs every stage on `input [B × input_shape]`, returning `[B × n_classes]` logits.
    pub fn forward_on_tape(&self, tape: &mut Tape<T>, params: &[Var], input: Var) -> Result<Var> {
        self.check_batch(tape.value(input).shape())?;
        let batch = tape.value(input).shape()[0];
        let mut x = input;
        for (planned, range) in self.plan.stages.iter().zip(&self.stage_params) {
            let p = &params[range.clone()];
            x = match &planned.stage {
                Stage::Dense { activation, .. } => {
                    let y = tape.matmul(x, p[0])?;
                    let y = tape.add_bias(y, p[1])?;
                    match activation {
                        Some(a) => tape.activation(y, *a)?,
                        None => y,
                    }
                }
                Stage::Conv {
                    stride,
                    padding,
                    activation,
                    ..
                } => {
                    let y = tape.conv(x, p[0], p[1], stride, padding)?;
                    tape.activation(y, *activation)?
                }
                Stage::Flatten => tape.reshape(x, &[batch, planned.output.iter().product()])?,
                Stage::CnnToRnn => cnn_to_rnn_reshape(tape, x)?,
                Stage::Recurrent {
                    cell,
                    inputs,
                    hidden,
                    layers,
                    direction,
                    emit_sequence,
                    ..
                } => {
                    let dirs = direction.count();
                    let mut seq = x;
                    let mut out = x;
                    for depth in 0..*layers {
                        let top = depth + 1 == *layers;
                        let collect = !top || *emit_sequence;
                        let fan_in = if depth == 0 { *inputs } else { hidden * dirs };
                        let cells: Vec<_> = (0..dirs)
                            .map(|d| {
                                let base = (depth * dirs + d) * 3;
                                CellVars {
                                    kind: *cell,
                                    inputs: fan_in,
                                    hidden: *hidden,
                                    w_x: p[base],
                                    w_h: p[base + 1],
                                    bias: p[base + 2],
                                }
                                .prepare(tape)
                            })
                            .collect::<Result<_>>()?;
                        let result = match direction {
                            Direction::Uni => run_sequence(tape, &cells[0], seq, false, collect)?,
                            Direction::Bi => bidirectional(tape, &cells[0], &cells[1], seq, collect)?,
                        };
                        if top {
                            out = if *emit_sequence {
                                result.outputs.expect("collected")
                            } else {
                                result.last
                            };
                        } else {
                            seq = result.outputs.expect("collected");
                        }
                    }
                    out
                }
            };
        }
        Ok(x)
    }

    /// Inference pass: `(logits, probabilities)`, both `[B × n_classes]`.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        self.check_batch(batch.shape())?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, |_| false);
        let input = tape.constant(batch.clone());
        let logits = self.forward_on_tape(&mut tape, &params, input)?;
        let logits = tape.value(logits).clone();
        let probs = softmax_rows(&logits)?;
        Ok((logits, probs))
    }
}

/// `[B × C × F × T] → [B × T × C·F]` or `[B × C × T] → [B × T × C]`.
///
/// Time becomes the sequence axis; channel and frequency are flattened
/// channel-major. Values are only permuted.
pub fn cnn_to_rnn_reshape<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    match *tape.value(x).shape() {
        [_, _, _] => tape.permute(x, &[0, 2, 1]),
        [b, c, f, t] => {
            let p = tape.permute(x, &[0, 3, 1, 2])?;
            tape.reshape(p, &[b, t, c * f])
        }
        ref other => Err(TensorError::Contract(format!(
            "CNN→RNN reshape needs [B, C, T] or [B, C, F, T], got {other:?}"
        ))),
    }
}
