//! Minimal reverse-mode automatic differentiation over dense row-major
//! tensors.
//!
//! Images are laid out channels-last (`[batch, height, width, channels]`),
//! token sequences as `[batch, tokens, width]`. Every op records a closure on
//! a [`Graph`] tape; [`Graph::backward`] walks the tape in reverse.
//!
//! The crate is generic over [`Real`] so the same model code runs in `f32`
//! for training and in `f64` for finite-difference gradient checks.

mod graph;
mod linalg;
mod ops;
mod optim;
mod params;
mod real;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use linalg::matmul;
pub use ops::softmax_last;
pub use optim::{AdamW, AdamWConfig};
pub use params::{GradStore, ParamStore, Session};
pub use real::Real;
pub use tensor::Tensor;
