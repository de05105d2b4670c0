use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::tensor::{ParamStore, Scalar};

/// Adaptive moment estimation with bias-corrected first and second moments.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    steps: u32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// One update from the gradients currently held by `params`.
    pub fn step<T: Scalar>(&mut self, params: &mut ParamStore<T>) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - Float::powi(self.beta1, t);
        let c2 = 1.0 - Float::powi(self.beta2, t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let (ms, vs) = (&mut self.m, &mut self.v);
        params.update_each(|i, value, grad| {
            if ms.len() <= i {
                ms.push(vec![0.0; value.len()]);
                vs.push(vec![0.0; value.len()]);
            }
            let (m, v) = (&mut ms[i], &mut vs[i]);
            for j in 0..value.len() {
                let g = grad[j].as_f64();
                m[j] = b1 * m[j] + (1.0 - b1) * g;
                v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                let update = lr * (m[j] / c1) / (Float::sqrt(v[j] / c2) + eps);
                value[j] -= T::of(update);
            }
        });
    }
}
