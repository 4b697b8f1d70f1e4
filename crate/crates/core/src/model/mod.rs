//! Declarative topologies, shape planning and the forward pass.

mod network;
mod plan;
pub mod recurrent;
mod spec;

pub use network::{cnn_to_rnn_reshape, Model, Param};
pub use plan::{infer_conv_output_size, plan_shapes, PlannedStage, ShapePlan, Stage};
pub use spec::{CellKind, Direction, LayerSpec, ModelSpec};
