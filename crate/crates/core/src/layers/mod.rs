//! Neural building blocks composed by the model zoo.
//!
//! Each layer owns [`ParamId`]s into a shared [`ParamStore`] and runs its
//! forward pass on a [`Graph`] given the bound parameter variables (one
//! [`Var`] per store entry, in store order). Convolutions use valid padding
//! and a relu; only model heads use a sigmoid.

mod conv;
mod dense;
mod dropout;
mod embedding;
mod lstm;

use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Scalar, Tensor};

pub use conv::{Conv1d, SeparableConv1d};
pub use dense::Dense;
pub use dropout::{dropout, dropout_mask, DropoutMode};
pub use embedding::Embedding;
pub use lstm::{Bidirectional, Lstm};

#[allow(unused_imports)]
pub(crate) use crate::tensor::{Graph, ParamId, ParamStore, TensorError, Var};

/// Random stream used for parameter initialization and stochastic ops.
pub type Stream = ChaCha8Rng;

/// Whether a forward pass trains (dropout active, masks drawn from the
/// stochastic stream) or evaluates (deterministic, dropout-free).
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Stream),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    /// Inverted-dropout mask of `shape`, or `None` when no mask applies.
    pub fn mask<T: Scalar>(&mut self, shape: &[usize], rate: f64) -> Option<Tensor<T>> {
        match self {
            Mode::Train(rng) if rate > 0.0 => Some(dropout_mask(rng, shape, rate)),
            _ => None,
        }
    }
}

/// Embedding width from vocabulary size: the fourth root, rounded half up,
/// at least 1.
pub fn embedding_dim(vocab_size: usize) -> usize {
    let root = Float::powf(vocab_size.max(1) as f64, 0.25);
    (Float::floor(root + 0.5) as usize).max(1)
}

/// Glorot-style uniform draw in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar>(
    rng: &mut Stream,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let bound = Float::sqrt(6.0 / (fan_in + fan_out) as f64);
    uniform(rng, shape, bound)
}

pub fn uniform<T: Scalar>(rng: &mut Stream, shape: &[usize], bound: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::of(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data).expect("shape and length agree")
}
