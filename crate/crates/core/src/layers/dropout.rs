use rand::Rng;

use super::{Graph, Mode, Stream, TensorError, Var};
use crate::tensor::{Scalar, Tensor};

/// How a dropout mask is shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutMode {
    PerElement,
    /// One mask per sequence, reused at every time step.
    PerTimestepShared,
}

/// Mask of zeros and `1 / (1 - rate)` values.
pub fn dropout_mask<T: Scalar>(rng: &mut Stream, shape: &[usize], rate: f64) -> Tensor<T> {
    let keep = T::of(1.0 / (1.0 - rate));
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape and length agree")
}

/// Inverted dropout on `[n, ...]` activations. In shared mode the input must
/// be `[n, L, c]` and one `[n, 1, c]` mask covers every time step. Identity
/// in evaluation mode or at rate 0.
pub fn dropout<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    rate: f64,
    sharing: DropoutMode,
    mode: &mut Mode,
) -> Result<Var, TensorError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::Invalid {
            op: "dropout",
            reason: "rate must lie in [0, 1)",
        });
    }
    let shape = g.shape(x).to_vec();
    let mask_shape = match sharing {
        DropoutMode::PerElement => shape,
        DropoutMode::PerTimestepShared => {
            if shape.len() != 3 {
                return Err(TensorError::Rank {
                    op: "dropout",
                    expected: 3,
                    shape,
                });
            }
            alloc::vec![shape[0], 1, shape[2]]
        }
    };
    match mode.mask::<T>(&mask_shape, rate) {
        Some(mask) => {
            let m = g.constant(mask);
            g.mul(x, m)
        }
        None => Ok(x),
    }
}
