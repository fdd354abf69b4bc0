//! Dense tensors, a reverse-mode tape, RMSProp and a finite-difference checker.

mod gradcheck;
mod graph;
pub mod kernels;
mod optim;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckReport, RELATIVE_FLOOR};
pub use graph::{Gradients, Graph, Var};
pub use optim::{clip_global_norm, EpsilonPlacement, OptimState, RmsPropConfig, StepStats};
pub use tensor::Tensor;

/// Scalar type for all tensor data.
#[cfg(not(feature = "f32"))]
pub type Real = f64;
#[cfg(feature = "f32")]
pub type Real = f32;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch, {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: domain error, {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },
    #[error("non-finite value {value} in {what} at flat index {index}")]
    NonFinite { what: String, index: usize, value: f64 },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("loss does not depend on any recorded parameter")]
    Detached,
    #[error("graph already consumed by a previous backward pass")]
    GraphConsumed,
}

/// Ordered collection of named parameter tensors.
///
/// Order is stable and defines the layout of gradients, optimizer
/// accumulators and checkpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        let mut store = Self::new();
        for (name, t) in entries {
            store.push(name, t);
        }
        store
    }

    /// Appends a parameter and returns its index.
    ///
    /// Panics on a duplicate name.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter name {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.tensors[i])
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Order-sensitive FNV-1a digest of names, shapes and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (name, t) in self.iter() {
            mix(name.as_bytes());
            for d in t.shape() {
                mix(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                mix(&v.to_le_bytes());
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksum_tracks_values() {
        let a = ParamStore::from_entries(vec![("w".into(), Tensor::vector(vec![1.0, 2.0]))]);
        let mut b = a.clone();
        assert_eq!(a.checksum(), b.checksum());
        b.tensors_mut()[0].data_mut()[1] = 2.0000001;
        assert_ne!(a.checksum(), b.checksum());
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.push("w", Tensor::scalar(0.0));
        s.push("w", Tensor::scalar(1.0));
    }
}
