//! Dense tensors, a reverse-mode tape, optimizers and a finite-difference
//! gradient oracle.

mod gradcheck;
mod graph;
mod optim;
mod param;
mod tensor;

pub use gradcheck::grad_check;
pub use graph::{bce_term, Graph, Var, PROB_CLAMP};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tensor::{sigmoid, Tensor2D};
