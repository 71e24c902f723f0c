//! Dense feedforward networks with exact reverse-mode gradients, losses and
//! first-order optimizers.
//!
//! The same [`Mlp`] type backs the environment classifier, the policy and both
//! critics.

pub mod checkpoint;
mod loss;
mod mlp;
mod optim;

pub use loss::{
    cross_entropy, cross_entropy_one_hot, one_hot_index, softmax, softmax_cross_entropy,
    softmax_rows, LOG_PROB_FLOOR,
};
pub use mlp::{stack_rows, Activation, ForwardTrace, Mlp};
pub use optim::{Optimizer, OptimizerConfig};
