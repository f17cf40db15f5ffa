//! Dense tensors, a reverse-mode differentiation tape, RMSprop, and
//! gradient checking.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod optim;
pub mod params;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, ParamCheck};
pub use graph::{logsumexp, sigmoid, Graph, Var};
pub use optim::RmsProp;
pub use params::{Gradients, Group, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
