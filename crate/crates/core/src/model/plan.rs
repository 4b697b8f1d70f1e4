//! Shape inference over a layer stack.
//!
//! Planning resolves every user layer into concrete stages with known input
//! and output sample shapes (batch axis excluded), inserting the implicit
//! reshapes between families: a flatten in front of a dense layer that
//! follows a channel layout, and a CNN→RNN reshape in front of a recurrent
//! layer that follows one.

use crate::error::{Result, TensorError};
use crate::model::spec::{CellKind, Direction, LayerSpec, ModelSpec};
use crate::tape::Activation;

/// `floor((in + 2·padding − kernel) / stride) + 1`, rejecting results below 1.
pub fn infer_conv_output_size(in_extent: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if in_extent == 0 || kernel == 0 || stride == 0 {
        return Err(TensorError::Config(format!(
            "extent {in_extent}, kernel {kernel} and stride {stride} must all be at least 1"
        )));
    }
    let padded = padding
        .checked_mul(2)
        .and_then(|p| p.checked_add(in_extent))
        .ok_or_else(|| TensorError::Config(format!("padding {padding} overflows")))?;
    if padded < kernel {
        return Err(TensorError::Config(format!(
            "kernel {kernel} exceeds padded extent {padded} (input {in_extent}, padding {padding}); output extent would be < 1"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// A resolved stage. `layer` is the index of the originating [`LayerSpec`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stage {
    Dense {
        layer: usize,
        inputs: usize,
        outputs: usize,
        activation: Option<Activation>,
    },
    Conv {
        layer: usize,
        in_channels: usize,
        out_channels: usize,
        kernel: Vec<usize>,
        stride: Vec<usize>,
        padding: Vec<usize>,
        activation: Activation,
    },
    Recurrent {
        layer: usize,
        cell: CellKind,
        inputs: usize,
        hidden: usize,
        layers: usize,
        direction: Direction,
        /// Emit the full `[T, dirs·H]` sequence rather than the final state.
        emit_sequence: bool,
    },
    Flatten,
    CnnToRnn,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedStage {
    pub stage: Stage,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    /// Inserted by the planner rather than declared.
    pub implicit: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapePlan {
    pub stages: Vec<PlannedStage>,
}

impl ShapePlan {
    pub fn output_shape(&self) -> &[usize] {
        &self.stages.last().expect("plans are never empty").output
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Layout {
    /// `[C, spatial...]`, time last.
    Channels,
    /// `[T, F]`
    Sequence,
    Flat,
}

fn err(layer: usize, msg: impl std::fmt::Display) -> TensorError {
    TensorError::Config(format!("layer {layer}: {msg}"))
}

fn positive(layer: usize, what: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(err(layer, format!("{what} must be at least 1")));
    }
    Ok(())
}

fn to_sequence(shape: &[usize]) -> Option<Vec<usize>> {
    match *shape {
        [c, t] => Some(vec![t, c]),
        [c, f, t] => Some(vec![t, c * f]),
        _ => None,
    }
}

/// Resolves per-layer shapes for `spec`, or explains why the chain is impossible.
pub fn plan_shapes(spec: &ModelSpec) -> Result<ShapePlan> {
    if spec.layers.is_empty() {
        return Err(TensorError::Config("model has no layers".into()));
    }
    if spec.input_shape.is_empty() || spec.input_shape.len() > 4 || spec.input_shape.contains(&0) {
        return Err(TensorError::Config(format!(
            "input shape {:?} must have 1 to 4 positive dimensions",
            spec.input_shape
        )));
    }
    if spec.n_classes < 1 {
        return Err(TensorError::Config("n_classes must be at least 1".into()));
    }
    let last = spec.layers.len() - 1;
    match spec.layers[last] {
        LayerSpec::Dense { hidden_nodes } if hidden_nodes == spec.n_classes => {}
        _ => {
            return Err(err(
                last,
                format!("the last layer must be dense with {} outputs", spec.n_classes),
            ))
        }
    }

    let mut stages: Vec<PlannedStage> = Vec::new();
    let mut shape = spec.input_shape.clone();
    let mut layout = if shape.len() == 1 { Layout::Flat } else { Layout::Channels };
    let mut seen_recurrent = false;

    let push = |stages: &mut Vec<PlannedStage>, stage, input: &[usize], output: Vec<usize>, implicit| {
        stages.push(PlannedStage {
            stage,
            input: input.to_vec(),
            output,
            implicit,
        });
    };

    for (i, layer) in spec.layers.iter().enumerate() {
        match layer {
            LayerSpec::Dense { hidden_nodes } => {
                positive(i, "hidden_nodes", *hidden_nodes)?;
                match layout {
                    Layout::Flat => {}
                    Layout::Sequence => {
                        // the recurrent stage hands its final state to the classifier
                        let prev = stages.last_mut().filter(|s| matches!(s.stage, Stage::Recurrent { .. }));
                        if let Some(PlannedStage {
                            stage: Stage::Recurrent { emit_sequence, .. },
                            output,
                            ..
                        }) = prev
                        {
                            *emit_sequence = false;
                            output.remove(0);
                            shape = output.clone();
                        } else {
                            let flat = vec![shape.iter().product()];
                            push(&mut stages, Stage::Flatten, &shape, flat.clone(), true);
                            shape = flat;
                        }
                    }
                    Layout::Channels => {
                        let flat = vec![shape.iter().product()];
                        push(&mut stages, Stage::Flatten, &shape, flat.clone(), true);
                        shape = flat;
                    }
                }
                let activation = (i != last).then_some(spec.activation);
                let out = vec![*hidden_nodes];
                push(
                    &mut stages,
                    Stage::Dense {
                        layer: i,
                        inputs: shape[0],
                        outputs: *hidden_nodes,
                        activation,
                    },
                    &shape,
                    out.clone(),
                    false,
                );
                shape = out;
                layout = Layout::Flat;
            }
            LayerSpec::Conv {
                rank,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                if seen_recurrent {
                    return Err(err(i, "a convolution cannot follow a recurrent layer"));
                }
                if layout != Layout::Channels {
                    return Err(err(i, format!("convolution needs a channel-first input, got {shape:?}")));
                }
                if !(1..=3).contains(rank) {
                    return Err(err(i, format!("convolution rank {rank} is not 1, 2 or 3")));
                }
                if shape.len() != rank + 1 {
                    return Err(err(
                        i,
                        format!("conv{rank}d needs {} spatial axes, input {shape:?} has {}", rank, shape.len() - 1),
                    ));
                }
                if kernel.len() != *rank || stride.len() != *rank || padding.len() != *rank {
                    return Err(err(i, format!("kernel, stride and padding need {rank} entries each")));
                }
                positive(i, "channels", *out_channels)?;
                let mut out = vec![*out_channels];
                for axis in 0..*rank {
                    let extent = infer_conv_output_size(shape[axis + 1], kernel[axis], stride[axis], padding[axis])
                        .map_err(|e| err(i, format!("spatial axis {axis}: {e}")))?;
                    out.push(extent);
                }
                push(
                    &mut stages,
                    Stage::Conv {
                        layer: i,
                        in_channels: shape[0],
                        out_channels: *out_channels,
                        kernel: kernel.clone(),
                        stride: stride.clone(),
                        padding: padding.clone(),
                        activation: spec.activation,
                    },
                    &shape,
                    out.clone(),
                    false,
                );
                shape = out;
            }
            LayerSpec::Recurrent {
                cell,
                hidden_nodes,
                layers,
                direction,
            } => {
                positive(i, "hidden_nodes", *hidden_nodes)?;
                positive(i, "hidden layers", *layers)?;
                match layout {
                    Layout::Flat => {
                        return Err(err(i, format!("recurrent layer needs a sequence input, got flat {shape:?}")))
                    }
                    Layout::Channels => {
                        let seq = to_sequence(&shape).ok_or_else(|| {
                            err(i, format!("recurrent layer cannot take {shape:?}; expected [C, T] or [C, F, T]"))
                        })?;
                        push(&mut stages, Stage::CnnToRnn, &shape, seq.clone(), true);
                        shape = seq;
                    }
                    Layout::Sequence => {}
                }
                let out = vec![shape[0], hidden_nodes * direction.count()];
                push(
                    &mut stages,
                    Stage::Recurrent {
                        layer: i,
                        cell: *cell,
                        inputs: shape[1],
                        hidden: *hidden_nodes,
                        layers: *layers,
                        direction: *direction,
                        emit_sequence: true,
                    },
                    &shape,
                    out.clone(),
                    false,
                );
                shape = out;
                layout = Layout::Sequence;
                seen_recurrent = true;
            }
            LayerSpec::Flatten => {
                let flat = vec![shape.iter().product()];
                push(&mut stages, Stage::Flatten, &shape, flat.clone(), false);
                shape = flat;
                layout = Layout::Flat;
            }
            LayerSpec::CnnToRnnReshape => {
                if layout != Layout::Channels {
                    return Err(err(i, format!("CNN→RNN reshape needs a channel layout, got {shape:?}")));
                }
                let seq = to_sequence(&shape)
                    .ok_or_else(|| err(i, format!("CNN→RNN reshape needs [C, T] or [C, F, T], got {shape:?}")))?;
                push(&mut stages, Stage::CnnToRnn, &shape, seq.clone(), false);
                shape = seq;
                layout = Layout::Sequence;
            }
        }
    }
    Ok(ShapePlan { stages })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_size_formula() {
        // floor((28 + 2 - 3) / 1) + 1
        assert_eq!(infer_conv_output_size(28, 3, 1, 1).unwrap(), 28 + 2 - 3 + 1);
        assert_eq!(infer_conv_output_size(28, 3, 1, 1).unwrap(), 28);
        assert_eq!(infer_conv_output_size(5, 5, 1, 0).unwrap(), 1);
        assert!(infer_conv_output_size(3, 5, 1, 0).is_err());
        assert!(infer_conv_output_size(3, 1, 0, 0).is_err());
    }

    #[test]
    fn eeg_cnn_plan() {
        // 4 convolutional layers + 2 fully connected layers over a 4096-sample record
        let spec = ModelSpec::new(
            vec![1, 4096],
            vec![
                LayerSpec::conv(1, 8, 7, 4, 3),
                LayerSpec::conv(1, 16, 5, 4, 2),
                LayerSpec::conv(1, 16, 5, 4, 2),
                LayerSpec::conv(1, 32, 3, 2, 1),
                LayerSpec::dense(32),
                LayerSpec::dense(2),
            ],
            2,
        );
        let plan = plan_shapes(&spec).unwrap();
        assert_eq!(plan.output_shape(), &[2]);
        let convs = plan.stages.iter().filter(|s| matches!(s.stage, Stage::Conv { .. })).count();
        let dense = plan.stages.iter().filter(|s| matches!(s.stage, Stage::Dense { .. })).count();
        assert_eq!((convs, dense), (4, 2));
        assert!(plan.stages.iter().any(|s| s.implicit && s.stage == Stage::Flatten));
    }

    #[test]
    fn shrinking_stack_errors_at_the_fourth_layer() {
        // 17 → 8 → 3 → 1 → error, by repeated application of the formula
        let mut extent = 17;
        let mut trace = vec![extent];
        while let Ok(next) = infer_conv_output_size(extent, 3, 2, 0) {
            extent = next;
            trace.push(extent);
        }
        assert_eq!(trace, vec![17, 8, 3, 1]);

        let mut layers = vec![LayerSpec::conv(1, 2, 3, 2, 0); 5];
        layers.push(LayerSpec::dense(2));
        let err = plan_shapes(&ModelSpec::new(vec![1, 17], layers, 2)).unwrap_err();
        assert!(err.to_string().contains("layer 3"), "{err}");
    }

    #[test]
    fn empty_spec_is_rejected() {
        assert!(plan_shapes(&ModelSpec::new(vec![1, 10], vec![], 2)).is_err());
    }

    #[test]
    fn cnn_then_rnn_keeps_time_axis() {
        let spec = ModelSpec::new(
            vec![8, 4, 10],
            vec![
                LayerSpec::Conv {
                    rank: 2,
                    out_channels: 8,
                    kernel: vec![1, 1],
                    stride: vec![1, 1],
                    padding: vec![0, 0],
                },
                LayerSpec::recurrent(CellKind::Gru, 5, 1, Direction::Bi),
                LayerSpec::dense(3),
            ],
            3,
        );
        let plan = plan_shapes(&spec).unwrap();
        let reshape = plan.stages.iter().find(|s| s.stage == Stage::CnnToRnn).unwrap();
        assert_eq!(reshape.output, vec![10, 32]);
        let rec = plan.stages.iter().find(|s| matches!(s.stage, Stage::Recurrent { .. })).unwrap();
        assert_eq!(rec.output, vec![10]);
        assert_eq!(plan.output_shape(), &[3]);
    }

    #[test]
    fn rejects_impossible_chains() {
        let rnn = LayerSpec::recurrent(CellKind::Rnn, 4, 1, Direction::Uni);
        // recurrent on flat input
        assert!(plan_shapes(&ModelSpec::new(vec![1, 8], vec![LayerSpec::dense(4), rnn.clone(), LayerSpec::dense(2)], 2)).is_err());
        // conv after recurrent
        assert!(plan_shapes(&ModelSpec::new(
            vec![1, 8],
            vec![rnn.clone(), LayerSpec::conv(1, 2, 1, 1, 0), LayerSpec::dense(2)],
            2
        ))
        .is_err());
        // head size mismatch
        assert!(plan_shapes(&ModelSpec::new(vec![1, 8], vec![LayerSpec::dense(3)], 2)).is_err());
        // conv rank mismatch
        assert!(plan_shapes(&ModelSpec::new(vec![1, 8], vec![LayerSpec::conv(2, 2, 1, 1, 0), LayerSpec::dense(2)], 2)).is_err());
    }

    #[test]
    fn stacked_recurrent_layers_pass_sequences() {
        let spec = ModelSpec::new(
            vec![2, 6],
            vec![
                LayerSpec::recurrent(CellKind::Lstm, 3, 1, Direction::Uni),
                LayerSpec::recurrent(CellKind::Gru, 4, 1, Direction::Bi),
                LayerSpec::dense(2),
            ],
            2,
        );
        let plan = plan_shapes(&spec).unwrap();
        let recs: Vec<_> = plan
            .stages
            .iter()
            .filter(|s| matches!(s.stage, Stage::Recurrent { .. }))
            .map(|s| s.output.clone())
            .collect();
        assert_eq!(recs, vec![vec![6, 3], vec![8]]);
    }
}
