use alloc::format;

use super::{glorot_uniform, Graph, ParamId, ParamStore, Stream, TensorError, Var};
use crate::tensor::{Activation, Scalar, Tensor};

/// Fully connected layer `activation(x W + b)` on `[n, c]` input.
#[derive(Debug, Clone)]
pub struct Dense {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub units: usize,
    pub activation: Activation,
}

impl Dense {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        units: usize,
        activation: Activation,
        rng: &mut Stream,
    ) -> Self {
        let kernel = store.add(
            &format!("{name}.kernel"),
            glorot_uniform(rng, &[inputs, units], inputs, units),
        );
        let bias = store.add(&format!("{name}.bias"), Tensor::zeros(&[units]));
        Self {
            kernel,
            bias,
            units,
            activation,
        }
    }

    pub fn param_count(inputs: usize, units: usize) -> usize {
        inputs * units + units
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        x: Var,
    ) -> Result<Var, TensorError> {
        let xw = g.matmul(x, p[self.kernel.index()])?;
        let z = g.add(xw, p[self.bias.index()])?;
        Ok(g.activation(self.activation, z))
    }
}
