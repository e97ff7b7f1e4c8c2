//! Minimal differentiable computation: tensors, a reverse-mode tape over
//! the primitives the encoders use, parameter sets and Adam.

mod adam;
pub(crate) mod gemm;
mod graph;
mod params;
mod tensor;

#[cfg(test)]
mod gradcheck;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use graph::{Gradients, Graph, Var};
pub use params::{Checkpoint, CheckpointEntry, ParameterSet};
pub use tensor::Tensor;
