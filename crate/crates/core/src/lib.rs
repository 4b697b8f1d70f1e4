//! Numeric core for end-to-end signal classification.
//!
//! * [`Tensor`] and [`Tape`]: dense arrays with reverse-mode autodiff.
//! * [`model`]: FNN / CNN / RNN stacks built from a [`ModelSpec`].
//! * [`train`]: SGD / Adam mini-batch training with best-dev selection,
//!   checkpoints and fine-tuning.
//! * [`eval`]: confusion matrices, UAR, cross-validation and late fusion.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision.

pub mod conv;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
mod scalar;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Result, TensorError};
pub use model::{LayerSpec, Model, ModelSpec};
pub use scalar::Scalar;
pub use tape::{Activation, Grads, Tape, Var};
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Tape32 = Tape<f32>;
pub type Tape64 = Tape<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
pub type Dataset32 = train::Dataset<f32>;
pub type Dataset64 = train::Dataset<f64>;
