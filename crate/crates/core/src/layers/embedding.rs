use alloc::format;

use super::{uniform, Graph, ParamId, ParamStore, Stream, TensorError, Var};
use crate::tensor::Scalar;

/// Learned lookup table with one row per index; the pad row trains like any
/// other.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub const INIT_BOUND: f64 = 0.05;

    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        rows: usize,
        dim: usize,
        rng: &mut Stream,
    ) -> Self {
        let table = store.add(
            &format!("{name}.table"),
            uniform(rng, &[rows, dim], Self::INIT_BOUND),
        );
        Self { table, rows, dim }
    }

    pub fn param_count(rows: usize, dim: usize) -> usize {
        rows * dim
    }

    /// `[n * L]` row-major indices to `[n, L, dim]`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        indices: &[usize],
        n: usize,
        len: usize,
    ) -> Result<Var, TensorError> {
        g.gather(p[self.table.index()], indices, &[n, len])
    }
}
