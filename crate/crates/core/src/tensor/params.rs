use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::checkpoint::{Checkpoint, CheckpointEntry, CheckpointError};
use super::{Graph, Scalar, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Param<T> {
    name: String,
    value: Tensor<T>,
    grad: Vec<T>,
}

/// Ordered, named collection of trainable tensors with gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let grad = vec![T::zero(); value.len()];
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.params[id.0].grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Inserts every parameter into `graph` as a differentiable leaf, in
    /// store order.
    pub fn bind(&self, graph: &mut Graph<T>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| graph.variable(p.value.clone()))
            .collect()
    }

    /// Adds the graph gradients of previously bound leaves into the store.
    pub fn accumulate_grads(&mut self, graph: &Graph<T>, bound: &[Var]) {
        for (p, &v) in self.params.iter_mut().zip(bound) {
            if let Some(g) = graph.grad(v) {
                p.grad.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
            }
        }
    }

    /// Applies `f(value, grad)` to every parameter in order.
    pub fn update_each(&mut self, mut f: impl FnMut(usize, &mut [T], &[T])) {
        for (i, p) in self.params.iter_mut().enumerate() {
            f(i, p.value.data_mut(), &p.grad);
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            entries: self
                .params
                .iter()
                .map(|p| CheckpointEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    values: p.value.data().iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    /// Overwrites parameter values from a checkpoint whose names and shapes
    /// match this store exactly, in order.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
        if ckpt.entries.len() != self.params.len() {
            return Err(CheckpointError::EntryCount {
                expected: self.params.len(),
                found: ckpt.entries.len(),
            });
        }
        for (p, e) in self.params.iter().zip(&ckpt.entries) {
            if p.name != e.name {
                return Err(CheckpointError::NameMismatch {
                    expected: p.name.clone(),
                    found: e.name.clone(),
                });
            }
            if p.value.shape() != e.shape.as_slice() {
                return Err(CheckpointError::ShapeMismatch {
                    name: e.name.clone(),
                    expected: p.value.shape().to_vec(),
                    found: e.shape.clone(),
                });
            }
        }
        for (p, e) in self.params.iter_mut().zip(&ckpt.entries) {
            for (dst, &src) in p.value.data_mut().iter_mut().zip(&e.values) {
                *dst = T::of(src);
            }
        }
        Ok(())
    }
}
