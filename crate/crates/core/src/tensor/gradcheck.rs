use alloc::vec::Vec;

use super::{DoubleDouble, Graph, Scalar, Tensor, TensorError, Var};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(|a|, |n|, 1e-8)` over all checked elements.
    pub max_rel_error: f64,
    /// `(input, element)` position of the largest error.
    pub worst: Option<(usize, usize)>,
    /// Analytic and numeric gradient at `worst`.
    pub worst_values: Option<(f64, f64)>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// A scalar-valued function of graph inputs, evaluable at any precision.
///
/// `eval` receives one leaf per input tensor and must return a
/// single-element node.
pub trait Objective {
    fn eval<T: Scalar>(&self, g: &mut Graph<T>, inputs: &[Var]) -> Result<Var, TensorError>;
}

/// Checks the gradient of `f` with respect to every element of every input.
///
/// The analytic gradient comes from a tracked `f64` graph. Each element is
/// perturbed by `±step` and the central difference is taken in
/// [`DoubleDouble`], so the reference carries no `f64` rounding noise.
pub fn grad_check<O: Objective>(
    f: &O,
    inputs: &[Tensor<f64>],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport, TensorError> {
    grad_check_with::<DoubleDouble, O>(f, inputs, step, tolerance)
}

/// As [`grad_check`], with the central differences evaluated in `R`.
pub fn grad_check_with<R: Scalar, O: Objective>(
    f: &O,
    inputs: &[Tensor<f64>],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport, TensorError> {
    let mut graph = Graph::<f64>::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.variable(t.clone())).collect();
    let root = f.eval(&mut graph, &vars)?;
    graph.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            graph
                .grad(v)
                .map_or_else(|| alloc::vec![0.0; t.len()], <[f64]>::to_vec)
        })
        .collect();

    let eval = |perturbed: &[Tensor<R>]| -> Result<R, TensorError> {
        let mut g = Graph::untracked();
        let vs: Vec<Var> = perturbed.iter().map(|t| g.variable(t.clone())).collect();
        let r = f.eval(&mut g, &vs)?;
        let value = g.value(r);
        if value.len() != 1 {
            return Err(TensorError::NotScalar {
                shape: value.shape().to_vec(),
            });
        }
        Ok(value.data()[0])
    };

    let mut work: Vec<Tensor<R>> = inputs.iter().map(Tensor::cast).collect();
    let h = R::of(step);
    let mut max_rel_error = 0.0_f64;
    let mut worst = None;
    let mut worst_values = None;
    let mut checked = 0;
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let x0 = work[i].data()[j];
            work[i].data_mut()[j] = x0 + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = x0 - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = x0;

            let numeric = ((up - down) / (h + h)).as_f64();
            let a = analytic[i][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            checked += 1;
            if rel > max_rel_error || rel.is_nan() {
                max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                worst = Some((i, j));
                worst_values = Some((a, numeric));
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst,
        worst_values,
        checked,
        tolerance,
        passed: max_rel_error < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Weighted(Tensor<f64>);

    impl Objective for Weighted {
        fn eval<T: Scalar>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var, TensorError> {
            let wc = g.constant(self.0.cast());
            let p = g.mul(v[0], wc)?;
            Ok(g.sum(p))
        }
    }

    #[test]
    fn linear_function_agrees_exactly() {
        // f(x) = sum(w * x) is linear, so central differences are exact up to
        // rounding.
        let w = Tensor::from_f64(&[4], &[0.5, -2.0, 3.25, 1.0]).unwrap();
        let x = Tensor::from_f64(&[4], &[1.0, 2.0, -1.0, 0.5]).unwrap();
        let report = grad_check(&Weighted(w), &[x], 1e-5, 1e-14).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.checked, 4);
    }

    struct SigmoidChain;

    impl Objective for SigmoidChain {
        fn eval<T: Scalar>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var, TensorError> {
            let m = g.matmul(v[0], v[1])?;
            let s = g.sigmoid(m);
            Ok(g.sum(s))
        }
    }

    #[test]
    fn sigmoid_of_matmul_chain() {
        let a = Tensor::from_f64(&[2, 3], &[0.3, -0.7, 1.1, 0.2, 0.5, -0.9]).unwrap();
        let b = Tensor::from_f64(&[3, 2], &[0.4, -0.1, 0.8, 0.6, -0.5, 0.3]).unwrap();
        for r in [
            grad_check(&SigmoidChain, &[a.clone(), b.clone()], 1e-5, 1e-6).unwrap(),
            grad_check_with::<f64, _>(&SigmoidChain, &[a, b], 1e-5, 1e-6).unwrap(),
        ] {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn extended_reference_removes_rounding_noise() {
        // tiny gradients: f64 differences at a small step are dominated by
        // cancellation, the double-double reference is not
        let w = Tensor::from_f64(&[3], &[1e-9, -3e-10, 2e-9]).unwrap();
        let x = Tensor::from_f64(&[3], &[0.7, -1.3, 0.2]).unwrap();
        let wide = grad_check(&Weighted(w.clone()), &[x.clone()], 1e-7, 1e-12).unwrap();
        assert!(wide.passed, "{wide:?}");
        let narrow = grad_check_with::<f64, _>(&Weighted(w), &[x], 1e-7, 1e-12).unwrap();
        assert!(narrow.max_rel_error > wide.max_rel_error);
    }

    struct BadSquare;

    impl Objective for BadSquare {
        fn eval<T: Scalar>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var, TensorError> {
            // square with a derivative of 3x instead of 2x
            let sq = g.custom_unary(
                v[0],
                |t| {
                    let d = t.data().iter().map(|&x| x * x).collect();
                    Tensor::new(t.shape(), d).unwrap()
                },
                |input, _out, up| {
                    input
                        .data()
                        .iter()
                        .zip(up)
                        .map(|(&x, &u)| T::of(3.0) * x * u)
                        .collect()
                },
            )?;
            Ok(g.sum(sq))
        }
    }

    #[test]
    fn corrupted_backward_rule_fails() {
        let x = Tensor::from_f64(&[3], &[0.5, -1.5, 2.0]).unwrap();
        let report = grad_check(&BadSquare, &[x], 1e-5, 1e-4).unwrap();
        assert!(!report.passed);
        assert!(report.max_rel_error > 0.3);
    }
}
