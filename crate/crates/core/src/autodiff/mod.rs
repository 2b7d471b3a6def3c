//! Dense-tensor reverse-mode differentiation and the Adam optimizer.

mod adam;
pub mod checkpoint;
mod gemm;
mod params;
mod sparse;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use params::{ParamId, ParamStore};
pub use sparse::Csr;
pub use tape::{Activation, Gradients, ReduceKind, Tape, Var};
pub use tensor::Tensor;
