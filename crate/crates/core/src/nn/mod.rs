//! Dense `f64` tensors with a small reverse-mode tape: dilated 1D
//! convolution, batch normalization, activations, dropout, fully connected
//! layers, focal loss and Adam/AdamW.

mod kernels;
pub mod ops;
pub mod optim;
pub mod tape;
mod tensor;

use thiserror::Error;

pub use ops::{
    batchnorm1d, conv1d_dilated, focal_loss, focal_term, linear, relu, sigmoid, softmax, FocalLossParams, Mode,
    RunningStats, BN_EPS, BN_MOMENTUM, PROB_EPS,
};
pub use optim::{optim_step, Algorithm, OptimConfig, OptimState};
pub use tape::{backward, Gradients, ParamId, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("batch norm needs at least 2 values per channel in train mode, got {0}")]
    DegenerateBatch(usize),
    #[error("index error: {0}")]
    Index(String),
    #[error("tape error: {0}")]
    Tape(String),
    #[error("config error: {0}")]
    Config(String),
}
