use alloc::format;

use super::{glorot_uniform, Graph, ParamId, ParamStore, Stream, TensorError, Var};
use crate::tensor::{Scalar, Tensor};

/// Valid-padding 1D convolution followed by relu.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub width: usize,
    pub filters: usize,
}

impl Conv1d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        filters: usize,
        width: usize,
        rng: &mut Stream,
    ) -> Self {
        let kernel = store.add(
            &format!("{name}.kernel"),
            glorot_uniform(rng, &[width, c_in, filters], width * c_in, width * filters),
        );
        let bias = store.add(&format!("{name}.bias"), Tensor::zeros(&[filters]));
        Self {
            kernel,
            bias,
            width,
            filters,
        }
    }

    pub fn param_count(width: usize, c_in: usize, filters: usize) -> usize {
        width * c_in * filters + filters
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        x: Var,
    ) -> Result<Var, TensorError> {
        let z = g.conv1d(x, p[self.kernel.index()], Some(p[self.bias.index()]))?;
        Ok(g.relu(z))
    }
}

/// Depthwise per-channel convolution, then a pointwise channel mix with
/// bias, then relu.
#[derive(Debug, Clone)]
pub struct SeparableConv1d {
    /// `[k, c_in]`
    pub depthwise: ParamId,
    /// Stored as `[1, c_in, c_out]` so the mix runs as a width-1 convolution.
    pub pointwise: ParamId,
    pub bias: ParamId,
    pub width: usize,
    pub filters: usize,
}

impl SeparableConv1d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        filters: usize,
        width: usize,
        rng: &mut Stream,
    ) -> Self {
        let depthwise = store.add(
            &format!("{name}.depthwise"),
            glorot_uniform(rng, &[width, c_in], width, width),
        );
        let pointwise = store.add(
            &format!("{name}.pointwise"),
            glorot_uniform(rng, &[1, c_in, filters], c_in, filters),
        );
        let bias = store.add(&format!("{name}.bias"), Tensor::zeros(&[filters]));
        Self {
            depthwise,
            pointwise,
            bias,
            width,
            filters,
        }
    }

    pub fn param_count(width: usize, c_in: usize, filters: usize) -> usize {
        width * c_in + c_in * filters + filters
    }

    /// Convolution output before the relu.
    pub fn pre_activation<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        x: Var,
    ) -> Result<Var, TensorError> {
        let d = g.depthwise_conv1d(x, p[self.depthwise.index()])?;
        g.conv1d(d, p[self.pointwise.index()], Some(p[self.bias.index()]))
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &[Var],
        x: Var,
    ) -> Result<Var, TensorError> {
        let z = self.pre_activation(g, p, x)?;
        Ok(g.relu(z))
    }
}

#[cfg(test)]
mod tests {
    use super::super::uniform;
    use super::*;
    use crate::tensor::{grad_check, Objective};
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};

    fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64]) -> Tensor<f64> {
        let (n, len, c_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (w, c_out) = (k.shape()[0], k.shape()[2]);
        let out_len = len - w + 1;
        let mut out = Vec::new();
        for s in 0..n {
            for t in 0..out_len {
                for j in 0..c_out {
                    let mut acc = b[j];
                    for tau in 0..w {
                        for c in 0..c_in {
                            acc += x.at(&[s, t + tau, c]) * k.at(&[tau, c, j]);
                        }
                    }
                    out.push(acc);
                }
            }
        }
        Tensor::new(&[n, out_len, c_out], out).unwrap()
    }

    #[test]
    fn difference_kernel_by_hand() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_f64(&[1, 3, 1], &[3.0, 5.0, 9.0]).unwrap());
        let k = g.constant(Tensor::from_f64(&[2, 1, 1], &[1.0, -1.0]).unwrap());
        let y = g.conv1d(x, k, None).unwrap();
        assert_eq!(g.value(y).data(), &[-2.0, -4.0]);
        let k = g.constant(Tensor::from_f64(&[2, 1, 1], &[-1.0, 1.0]).unwrap());
        let y = g.conv1d(x, k, None).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 4.0]);
    }

    #[test]
    fn width_one_identity_copies_input() {
        let mut rng = Stream::seed_from_u64(1);
        let x = uniform::<f64>(&mut rng, &[2, 4, 3], 1.0);
        let mut eye = Tensor::zeros(&[1, 3, 3]);
        for c in 0..3 {
            eye.data_mut()[c * 3 + c] = 1.0;
        }
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let kv = g.constant(eye);
        let y = g.conv1d(xv, kv, None).unwrap();
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn matches_naive_loop_oracle() {
        let mut rng = Stream::seed_from_u64(2);
        for _ in 0..25 {
            let (n, c_in, c_out, w) = (
                rng.gen_range(1..4),
                rng.gen_range(1..5),
                rng.gen_range(1..5),
                rng.gen_range(1..5),
            );
            let len = w + rng.gen_range(0..6);
            let x = uniform::<f64>(&mut rng, &[n, len, c_in], 2.0);
            let k = uniform::<f64>(&mut rng, &[w, c_in, c_out], 2.0);
            let b = uniform::<f64>(&mut rng, &[c_out], 2.0);
            let mut g = Graph::new();
            let (xv, kv, bv) = (
                g.constant(x.clone()),
                g.constant(k.clone()),
                g.constant(b.clone()),
            );
            let y = g.conv1d(xv, kv, Some(bv)).unwrap();
            assert!(g.value(y).max_abs_diff(&naive_conv(&x, &k, b.data())) < 1e-12);
        }
    }

    #[test]
    fn short_input_is_an_error() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = Stream::seed_from_u64(0);
        let conv = Conv1d::new(&mut store, "c", 2, 3, 5, &mut rng);
        let sep = SeparableConv1d::new(&mut store, "s", 2, 3, 5, &mut rng);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let x = g.constant(Tensor::zeros(&[1, 4, 2]));
        assert!(matches!(
            conv.forward(&mut g, &p, x),
            Err(TensorError::WindowTooLong { .. })
        ));
        assert!(matches!(
            sep.forward(&mut g, &p, x),
            Err(TensorError::WindowTooLong { .. })
        ));
    }

    #[test]
    fn separable_equals_factorized_conv() {
        let mut rng = Stream::seed_from_u64(3);
        for _ in 0..25 {
            let (n, c_in, c_out, w) = (
                rng.gen_range(1..4),
                rng.gen_range(1..6),
                rng.gen_range(1..6),
                rng.gen_range(1..5),
            );
            let len = w + rng.gen_range(0..6);
            let mut store = ParamStore::<f64>::new();
            let sep = SeparableConv1d::new(&mut store, "s", c_in, c_out, w, &mut rng);
            *store.value_mut(sep.bias) = uniform(&mut rng, &[c_out], 1.0);
            let x = uniform::<f64>(&mut rng, &[n, len, c_in], 2.0);

            let dw = store.value(sep.depthwise);
            let pw = store.value(sep.pointwise);
            let mut full = vec![0.0; w * c_in * c_out];
            for tau in 0..w {
                for c in 0..c_in {
                    for j in 0..c_out {
                        full[(tau * c_in + c) * c_out + j] = dw.at(&[tau, c]) * pw.at(&[0, c, j]);
                    }
                }
            }
            let full = Tensor::new(&[w, c_in, c_out], full).unwrap();
            let expected = naive_conv(&x, &full, store.value(sep.bias).data());

            let mut g = Graph::new();
            let p = store.bind(&mut g);
            let xv = g.constant(x);
            let y = sep.pre_activation(&mut g, &p, xv).unwrap();
            assert!(g.value(y).max_abs_diff(&expected) < 1e-12);
        }
    }

    #[test]
    fn separable_special_cases() {
        let mut rng = Stream::seed_from_u64(4);
        let x = uniform::<f64>(&mut rng, &[2, 6, 3], 1.0);

        // identity pointwise: per-channel convolution only
        let mut store = ParamStore::<f64>::new();
        let sep = SeparableConv1d::new(&mut store, "s", 3, 3, 2, &mut rng);
        let mut eye = Tensor::zeros(&[1, 3, 3]);
        for c in 0..3 {
            eye.data_mut()[c * 3 + c] = 1.0;
        }
        *store.value_mut(sep.pointwise) = eye;
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = sep.pre_activation(&mut g, &p, xv).unwrap();
        let d = g.depthwise_conv1d(xv, p[sep.depthwise.index()]).unwrap();
        assert_eq!(g.value(y), g.value(d));

        // width 1, all-ones depthwise: pure channel mixing
        let mut store = ParamStore::<f64>::new();
        let sep = SeparableConv1d::new(&mut store, "s", 3, 2, 1, &mut rng);
        *store.value_mut(sep.depthwise) = Tensor::full(&[1, 3], 1.0);
        let mut g = Graph::new();
        let p = store.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = sep.pre_activation(&mut g, &p, xv).unwrap();
        let flat = g.reshape(xv, &[12, 3]).unwrap();
        let pw = g.reshape(p[sep.pointwise.index()], &[3, 2]).unwrap();
        let mixed = g.matmul(flat, pw).unwrap();
        assert!(g
            .value(y)
            .data()
            .iter()
            .zip(g.value(mixed).data())
            .all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn separable_has_fewer_parameters() {
        // c_in cancels: the saving is strict iff (k - 1)(c_out - 1) > 1, so
        // k = c_out = 2 ties
        for w in 2..6 {
            for c_in in 1..6 {
                for c_out in 2..6 {
                    let (s, f) = (
                        SeparableConv1d::param_count(w, c_in, c_out),
                        Conv1d::param_count(w, c_in, c_out),
                    );
                    if w == 2 && c_out == 2 {
                        assert_eq!(s, f);
                    } else {
                        assert!(s < f);
                    }
                }
            }
        }
        assert!(SeparableConv1d::param_count(5, 12, 64) < Conv1d::param_count(5, 12, 64));
        let mut store = ParamStore::<f64>::new();
        let mut rng = Stream::seed_from_u64(0);
        SeparableConv1d::new(&mut store, "s", 4, 6, 3, &mut rng);
        assert_eq!(store.count(), SeparableConv1d::param_count(3, 4, 6));
    }

    fn random_conv_case(rng: &mut Stream) -> (usize, usize, usize, usize, usize) {
        let w = rng.gen_range(1..4);
        (
            rng.gen_range(1..4),
            w + rng.gen_range(0..5),
            rng.gen_range(1..5),
            rng.gen_range(1..5),
            w,
        )
    }

    // tanh keeps these objectives away from relu kinks
    struct ConvTanh<'a>(&'a Conv1d);

    impl Objective for ConvTanh<'_> {
        fn eval<T: Scalar>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var, TensorError> {
            let z = g.conv1d(
                v[0],
                v[1 + self.0.kernel.index()],
                Some(v[1 + self.0.bias.index()]),
            )?;
            let t = g.tanh(z);
            let sq = g.mul(t, t)?;
            Ok(g.sum(sq))
        }
    }

    struct SeparableTanh<'a>(&'a SeparableConv1d);

    impl Objective for SeparableTanh<'_> {
        fn eval<T: Scalar>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var, TensorError> {
            let z = self.0.pre_activation(g, &v[1..], v[0])?;
            let t = g.tanh(z);
            let sq = g.mul(t, t)?;
            Ok(g.sum(sq))
        }
    }

    struct ReluStack<'a>(&'a Conv1d, &'a SeparableConv1d);

    impl Objective for ReluStack<'_> {
        fn eval<T: Scalar>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var, TensorError> {
            let h = self.0.forward(g, &v[1..], v[0])?;
            let y = self.1.forward(g, &v[1..], h)?;
            Ok(g.sum(y))
        }
    }

    #[test]
    fn conv_grad_check_trials() {
        let mut rng = Stream::seed_from_u64(21);
        for _ in 0..20 {
            let (n, len, c_in, c_out, w) = random_conv_case(&mut rng);
            let mut store = ParamStore::<f64>::new();
            let conv = Conv1d::new(&mut store, "c", c_in, c_out, w, &mut rng);
            *store.value_mut(conv.bias) = uniform(&mut rng, &[c_out], 0.5);
            let x = uniform::<f64>(&mut rng, &[n, len, c_in], 1.0);
            let mut inputs = vec![x];
            inputs.extend(store.ids().map(|id| store.value(id).clone()));
            let r = grad_check(&ConvTanh(&conv), &inputs, 1e-5, 1e-4).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn separable_grad_check_trials() {
        let mut rng = Stream::seed_from_u64(22);
        for _ in 0..20 {
            let (n, len, c_in, c_out, w) = random_conv_case(&mut rng);
            let mut store = ParamStore::<f64>::new();
            let sep = SeparableConv1d::new(&mut store, "s", c_in, c_out, w, &mut rng);
            *store.value_mut(sep.bias) = uniform(&mut rng, &[c_out], 0.5);
            let x = uniform::<f64>(&mut rng, &[n, len, c_in], 1.0);
            let mut inputs = vec![x];
            inputs.extend(store.ids().map(|id| store.value(id).clone()));
            let r = grad_check(&SeparableTanh(&sep), &inputs, 1e-5, 1e-4).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn relu_layers_grad_check() {
        let mut rng = Stream::seed_from_u64(23);
        for _ in 0..20 {
            let (n, len, c_in, c_out, w) = random_conv_case(&mut rng);
            let mut store = ParamStore::<f64>::new();
            let conv = Conv1d::new(&mut store, "c", c_in, c_out, w, &mut rng);
            let sep = SeparableConv1d::new(&mut store, "s", c_out, c_out, 1, &mut rng);
            // nonzero biases keep pre-activations off the relu kink at 0
            *store.value_mut(conv.bias) = uniform(&mut rng, &[c_out], 0.5);
            *store.value_mut(sep.bias) = uniform(&mut rng, &[c_out], 0.5);
            let x = uniform::<f64>(&mut rng, &[n, len, c_in], 1.0);
            let mut inputs = vec![x];
            inputs.extend(store.ids().map(|id| store.value(id).clone()));
            let r = grad_check(&ReluStack(&conv, &sep), &inputs, 1e-5, 1e-4).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }
}
