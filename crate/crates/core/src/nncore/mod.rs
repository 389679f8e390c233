//! Small reverse-mode autodiff core: dense matrices, multi-label MLPs,
//! optimizers, finite-difference gradient checks, and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod mlp;
pub mod optim;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{sigmoid, Gradients, Graph, NodeId};
pub use mlp::{Activation, Mlp, MlpSpec, LOGIT_BOUND, PROB_FLOOR};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::{Matrix, ParamSet, ParamTensor};
