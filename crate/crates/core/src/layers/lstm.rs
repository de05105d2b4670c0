use alloc::format;
use alloc::vec::Vec;

use super::{
    dropout, glorot_uniform, DropoutMode, Graph, Mode, ParamId, ParamStore, Stream, TensorError,
    Var,
};
use crate::tensor::{Scalar, Tensor};

/// Single-direction LSTM with gate blocks laid out `i, f, g, o` along the
/// last axis of each weight.
#[derive(Debug, Clone)]
pub struct Lstm {
    /// `[c_in, 4h]`
    pub kernel: ParamId,
    /// `[h, 4h]`
    pub recurrent: ParamId,
    /// `[4h]`
    pub bias: ParamId,
    pub c_in: usize,
    pub units: usize,
    pub input_dropout: f64,
    pub recurrent_dropout: f64,
}

impl Lstm {
    pub const FORGET_BIAS: f64 = 1.0;

    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        units: usize,
        input_dropout: f64,
        recurrent_dropout: f64,
        rng: &mut Stream,
    ) -> Self {
        // each gate block gets its own draw with per-gate fans
        let blocks = |rng: &mut Stream, rows: usize| -> Tensor<T> {
            let parts: Vec<Tensor<T>> = (0..4)
                .map(|_| glorot_uniform(rng, &[rows, units], rows, units))
                .collect();
            let mut data = Vec::with_capacity(rows * 4 * units);
            for r in 0..rows {
                for part in &parts {
                    data.extend_from_slice(&part.data()[r * units..(r + 1) * units]);
                }
            }
            Tensor::new(&[rows, 4 * units], data).expect("shape and length agree")
        };
        let kernel = store.add(&format!("{name}.kernel"), blocks(rng, c_in));
        let recurrent = store.add(&format!("{name}.recurrent"), blocks(rng, units));
        let mut b = Tensor::zeros(&[4 * units]);
        for v in &mut b.data_mut()[units..2 * units] {
            *v = T::of(Self::FORGET_BIAS);
        }
        let bias = store.add(&format!("{name}.bias"), b);
        Self {
            kernel,
            recurrent,
            bias,
            c_in,
            units,
            input_dropout,
            recurrent_dropout,
        }
    }

    pub fn param_count(c_in: usize, units: usize) -> usize {
        4 * units * (c_in + units + 1)
    }

    /// `[n, L, c_in]` to `[n, L, h]` with `return_sequences`, else the final
    /// state `[n, h]`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        x: Var,
        return_sequences: bool,
        mode: &mut Mode,
    ) -> Result<Var, TensorError> {
        let xs = g.shape(x).to_vec();
        if xs.len() != 3 || xs[2] != self.c_in {
            return Err(TensorError::ShapeMismatch {
                op: "lstm",
                left: xs,
                right: alloc::vec![self.c_in, 4 * self.units],
            });
        }
        let (n, len, c) = (xs[0], xs[1], xs[2]);
        let h = self.units;
        if len == 0 {
            return Err(TensorError::Invalid {
                op: "lstm",
                reason: "sequence length must be positive",
            });
        }
        let x = dropout(
            g,
            x,
            self.input_dropout,
            DropoutMode::PerTimestepShared,
            mode,
        )?;
        let rec_mask = mode
            .mask::<T>(&[n, h], self.recurrent_dropout)
            .map(|m| g.constant(m));

        // input projections for every time step in one product
        let flat = g.reshape(x, &[n * len, c])?;
        let xw = g.matmul(flat, p[self.kernel.index()])?;
        let xw = g.add(xw, p[self.bias.index()])?;
        let xw = g.reshape(xw, &[n, len, 4 * h])?;

        let mut state: Option<(Var, Var)> = None;
        let mut outputs = Vec::with_capacity(if return_sequences { len } else { 0 });
        for t in 0..len {
            let mut z = g.time_step(xw, t)?;
            if let Some((h_prev, _)) = state {
                let fed = match rec_mask {
                    Some(m) => g.mul(h_prev, m)?,
                    None => h_prev,
                };
                let hu = g.matmul(fed, p[self.recurrent.index()])?;
                z = g.add(z, hu)?;
            }
            let zi = g.slice_last(z, 0, h)?;
            let zf = g.slice_last(z, h, h)?;
            let zg = g.slice_last(z, 2 * h, h)?;
            let zo = g.slice_last(z, 3 * h, h)?;
            let i = g.sigmoid(zi);
            let gg = g.tanh(zg);
            let o = g.sigmoid(zo);
            let ig = g.mul(i, gg)?;
            let cell = match state {
                Some((_, c_prev)) => {
                    let f = g.sigmoid(zf);
                    let fc = g.mul(f, c_prev)?;
                    g.add(fc, ig)?
                }
                None => ig,
            };
            let tc = g.tanh(cell);
            let hidden = g.mul(o, tc)?;
            if return_sequences {
                outputs.push(hidden);
            }
            state = Some((hidden, cell));
        }
        if return_sequences {
            g.stack_time(&outputs)
        } else {
            Ok(state.expect("len > 0").0)
        }
    }
}

/// Runs one LSTM forward in time and another on the reversed sequence,
/// concatenating their features.
#[derive(Debug, Clone)]
pub struct Bidirectional {
    pub forward: Lstm,
    pub backward: Lstm,
}

impl Bidirectional {
    pub fn new(forward: Lstm, backward: Lstm) -> Result<Self, TensorError> {
        if forward.units != backward.units || forward.c_in != backward.c_in {
            return Err(TensorError::Invalid {
                op: "bidirectional",
                reason: "wrapped layers must share input width and hidden size",
            });
        }
        Ok(Self { forward, backward })
    }

    pub fn units(&self) -> usize {
        2 * self.forward.units
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        x: Var,
        return_sequences: bool,
        mode: &mut Mode,
    ) -> Result<Var, TensorError> {
        let fwd = self.forward.forward(g, p, x, return_sequences, mode)?;
        let rev = g.reverse_time(x)?;
        let mut bwd = self.backward.forward(g, p, rev, return_sequences, mode)?;
        if return_sequences {
            bwd = g.reverse_time(bwd)?;
        }
        g.concat_last(fwd, bwd)
    }
}
