use alloc::string::String;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    tensor: Tensor,
    /// Receives decoupled weight decay.
    decay: bool,
    trainable: bool,
}

/// Named parameter tensors of a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<Entry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, decay: bool) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(Entry { name, tensor, decay, trainable: true });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].tensor
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn decays(&self, id: ParamId) -> bool {
        self.entries[id.0].decay
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Freezes or unfreezes every tensor whose name starts with `prefix`.
    pub fn set_trainable(&mut self, prefix: &str, trainable: bool) {
        for e in &mut self.entries {
            if e.name.starts_with(prefix) {
                e.trainable = trainable;
            }
        }
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    /// Rounds every value to the nearest `f32`, so a 32-bit checkpoint of the
    /// store reproduces it exactly.
    pub fn round_to_f32(&mut self) {
        for e in &mut self.entries {
            for v in &mut e.tensor.data {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Overwrites a tensor by name, checking the shape.
    pub fn load(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) -> Result<()> {
        let id = self.find(name).ok_or_else(|| Error::UnknownParameter(name.into()))?;
        let t = &mut self.entries[id.0].tensor;
        if t.shape() != (rows, cols) || data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                name: name.into(),
                expected: t.shape(),
                found: (rows, cols),
            });
        }
        t.data = data;
        Ok(())
    }
}

/// Gradient buffer shaped like a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            tensors: store.entries.iter().map(|e| Tensor::zeros(e.tensor.rows, e.tensor.cols)).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        let sq: f64 = self.tensors.iter().flat_map(|t| t.data.iter()).map(|v| v * v).sum();
        libm::sqrt(sq)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flat_map(|t| t.data.iter()).all(|v| v.is_finite())
    }
}
