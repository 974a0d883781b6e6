use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// A scalar-valued function of several tensors with an analytic gradient.
pub trait Differentiable {
    fn forward(&self, inputs: &[Tensor<f64>]) -> Result<f64>;
    /// One gradient per input, shaped like that input.
    fn backward(&self, inputs: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `[input, i0, i1, ...]`: which input and which element was worst.
    pub worst_index: Vec<usize>,
    pub passed: bool,
}

/// Compares `op.backward` with central differences
/// `(f(x + eps) - f(x - eps)) / 2 eps` for every element of every input.
/// Relative error uses the denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check(op: &impl Differentiable, inputs: &[Tensor<f64>], eps: f64, tol: f64) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {eps}")));
    }
    let analytic = op.backward(inputs)?;
    if analytic.len() != inputs.len() {
        return Err(Error::Shape(format!("{} gradients for {} inputs", analytic.len(), inputs.len())));
    }
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut max_rel_err = 0.0f64;
    let mut worst_index = vec![0];
    for (k, grad) in analytic.iter().enumerate() {
        grad.check_same_shape(&inputs[k])?;
        if !grad.all_finite() {
            return Err(Error::Numeric(format!("analytic gradient of input {k}")));
        }
        for i in 0..inputs[k].len() {
            let x0 = inputs[k].data()[i];
            work[k].data_mut()[i] = x0 + eps;
            let fp = op.forward(&work)?;
            work[k].data_mut()[i] = x0 - eps;
            let fm = op.forward(&work)?;
            work[k].data_mut()[i] = x0;
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::Numeric(format!("forward at input {k} element {i}")));
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let a = grad.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel_err {
                max_rel_err = rel;
                worst_index = std::iter::once(k).chain(inputs[k].unravel(i)).collect();
            }
        }
    }
    Ok(GradCheckReport { max_rel_err, worst_index, passed: max_rel_err < tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear;

    impl Differentiable for Linear {
        fn forward(&self, x: &[Tensor<f64>]) -> Result<f64> {
            Ok(3.0 * x[0].sum())
        }
        fn backward(&self, x: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> {
            Ok(vec![Tensor::full(x[0].shape(), 3.0)])
        }
    }

    struct NanOp;

    impl Differentiable for NanOp {
        fn forward(&self, _: &[Tensor<f64>]) -> Result<f64> {
            Ok(f64::NAN)
        }
        fn backward(&self, x: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> {
            Ok(vec![Tensor::zeros(x[0].shape())])
        }
    }

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::from_fn(&[2, 3], |i| i as f64 * 0.37 - 1.0);
        let r = grad_check(&Linear, &[x], 1e-4, 1e-4).unwrap();
        assert!(r.max_rel_err < 1e-9, "{}", r.max_rel_err);
        assert!(r.passed);
    }

    #[test]
    fn non_finite_forward_is_an_error() {
        let x = Tensor::from_fn(&[2], |i| i as f64);
        assert!(matches!(grad_check(&NanOp, std::slice::from_ref(&x), 1e-4, 1e-4), Err(Error::Numeric(_))));
        assert!(grad_check(&Linear, &[x], 0.0, 1e-4).is_err());
    }
}
