//! A small differentiable engine for 1D CNN classifiers: convolution, max
//! pooling, batch normalization, dense layers, ReLU, softmax, cross-entropy
//! and Adam, plus finite-difference gradient checking.
//!
//! Values are stored as [`Real`] (`f32` for training, `f64` for gradient
//! checks); every reduction accumulates in `f64` in a fixed order, so
//! results are bit-reproducible.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod kernels;
pub mod layer;
pub mod model;
pub mod pool;
mod real;
mod tensor;

pub use activation::{relu, softmax, softmax_cross_entropy};
pub use adam::AdamState;
pub use batchnorm::BatchNorm;
pub use conv::Conv1d;
pub use dense::Dense;
pub use gradcheck::{gradient_check, gradient_check_with, layer_gradient_check, relative_error};
pub use layer::{Cache, Layer, LayerSpec};
pub use model::{LayerGrads, Model, Snapshot, Trace};
pub use pool::MaxPool1d;
pub use real::Real;
pub use tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
