//! Dense tensors, a reverse-mode differentiation tape, the layers the
//! addressee models are built from, and the optimizers that train them.

pub mod conv;
mod gemm;
pub mod gradcheck;
pub mod graph;
pub mod lstm;
pub mod optim;
pub mod tensor;

pub use conv::{conv2d_output_shape, maxpool2d_output_shape};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, Var};
pub use lstm::{lstm, LstmOutput, LstmParams};
pub use optim::{adam_step, sgd_step, AdamConfig, AdamState, OptimizerKind, ParamGroup, ParamStore, Parameter};
pub use tensor::Tensor;
