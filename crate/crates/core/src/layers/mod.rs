//! Differentiable layers. Each layer records what its backward pass needs
//! during a training-phase forward and consumes that record on backward.

mod activation;
mod batchnorm;
mod block;
mod conv;
mod param;
mod shuffle;
mod upsample;

pub use activation::{gelu, gelu_backward, gelu_scalar, relu, relu_backward, Act, Activation};
pub use batchnorm::{BatchNorm2d, BatchNormParams};
pub use block::Block;
pub use conv::{conv2d_backward, conv2d_forward, Conv2d, ConvGrads, ConvParams, ConvTape};
pub use param::{HasParams, Param, ParamMut, ParamRef};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};
pub use upsample::{upsample_bilinear2x, upsample_bilinear2x_backward};

/// Whether a forward pass is part of training (records tapes, uses batch
/// statistics) or inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}
