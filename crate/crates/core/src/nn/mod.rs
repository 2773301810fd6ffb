//! Minimal reverse-mode automatic differentiation for the encoders and the
//! sequence model.
//!
//! Values are `f64` row-major matrices. A [`Graph`] records one forward pass
//! over parameters held in a [`ParamStore`]; [`Graph::backward`] accumulates
//! parameter gradients into a [`Gradients`] buffer.

pub(crate) mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use layers::{AttentionPool, BiLstm, LayerNorm, Linear, Lstm, TransformerEncoder};
pub use optim::{AdamW, AdamWConfig};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
