//! Named finite-difference checks for every hand-written backward pass.
//!
//! Each op is scalarized as `f(inputs) = <R, op(inputs)>` with a fixed random
//! projection `R`, so the analytic gradient is the op's backward pass fed
//! `R` as the upstream gradient. Scalar losses are checked directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cab::{cab_backward, cab_forward, CabWeights};
use crate::error::Result;
use crate::losses::{dice_loss, smooth_l1};
use crate::tensor::{
    conv1x1, conv1x1_backward, grad_check, matmul, matmul_backward, sigmoid, sigmoid_backward, Differentiable, GradCheckReport, Tensor,
};

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_SEEDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CheckedOp {
    Matmul,
    Sigmoid,
    Conv1x1,
    Cab,
    Dice,
    SmoothL1,
}

impl CheckedOp {
    pub const ALL: [CheckedOp; 6] =
        [CheckedOp::Matmul, CheckedOp::Sigmoid, CheckedOp::Conv1x1, CheckedOp::Cab, CheckedOp::Dice, CheckedOp::SmoothL1];

    pub fn name(self) -> &'static str {
        match self {
            CheckedOp::Matmul => "matmul",
            CheckedOp::Sigmoid => "sigmoid",
            CheckedOp::Conv1x1 => "conv1x1",
            CheckedOp::Cab => "cab",
            CheckedOp::Dice => "dice",
            CheckedOp::SmoothL1 => "smooth_l1",
        }
    }
}

/// Result of checking one op at one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCheck {
    pub op: CheckedOp,
    pub seed: u64,
    /// True when the analytic gradient was deliberately scaled by 2.
    pub corrupted: bool,
    pub max_rel_err: f64,
    pub worst_index: Vec<usize>,
    pub passed: bool,
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::random_uniform(shape, lo, hi, rng)
}

fn cab_weights(inputs: &[Tensor<f64>]) -> CabWeights<f64> {
    CabWeights::from_tensors(std::array::from_fn(|i| inputs[i + 1].clone()))
}

/// One checkable op with its fixed non-differentiated data.
enum Case {
    Matmul {
        proj: Tensor<f64>,
    },
    Sigmoid {
        proj: Tensor<f64>,
    },
    Conv1x1 {
        proj: Tensor<f64>,
    },
    /// Inputs: `x` then the eight weight tensors.
    Cab {
        proj: Tensor<f64>,
    },
    Dice {
        gt: Tensor<f64>,
        ignore: Tensor<f64>,
    },
    SmoothL1 {
        gt: Tensor<f64>,
        mask: Tensor<f64>,
    },
}

impl Differentiable for Case {
    fn forward(&self, x: &[Tensor<f64>]) -> Result<f64> {
        match self {
            Case::Matmul { proj } => matmul(&x[0], &x[1])?.dot(proj),
            Case::Sigmoid { proj } => sigmoid(&x[0]).dot(proj),
            Case::Conv1x1 { proj } => conv1x1(&x[0], &x[1], &x[2])?.dot(proj),
            Case::Cab { proj } => cab_forward(&x[0], &cab_weights(x))?.dot(proj),
            Case::Dice { gt, ignore } => Ok(dice_loss(&x[0], gt, ignore)?.0),
            Case::SmoothL1 { gt, mask } => Ok(smooth_l1(&x[0], gt, mask)?.0),
        }
    }

    fn backward(&self, x: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> {
        match self {
            Case::Matmul { proj } => {
                let (ga, gb) = matmul_backward(&x[0], &x[1], proj)?;
                Ok(vec![ga, gb])
            }
            Case::Sigmoid { proj } => Ok(vec![sigmoid_backward(&sigmoid(&x[0]), proj)?]),
            Case::Conv1x1 { proj } => {
                let (gx, gw, gb) = conv1x1_backward(&x[0], &x[1], proj)?;
                Ok(vec![gx, gw, gb])
            }
            Case::Cab { proj } => {
                let (gx, gw) = cab_backward(&x[0], &cab_weights(x), proj)?;
                Ok(std::iter::once(gx).chain(gw.tensors().into_iter().cloned()).collect())
            }
            Case::Dice { gt, ignore } => Ok(vec![dice_loss(&x[0], gt, ignore)?.1]),
            Case::SmoothL1 { gt, mask } => Ok(vec![smooth_l1(&x[0], gt, mask)?.1]),
        }
    }
}

/// Doubles the analytic gradient of the wrapped op.
struct Doubled<'a>(&'a Case);

impl Differentiable for Doubled<'_> {
    fn forward(&self, x: &[Tensor<f64>]) -> Result<f64> {
        self.0.forward(x)
    }

    fn backward(&self, x: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>> {
        Ok(self.0.backward(x)?.into_iter().map(|g| g.scale(2.0)).collect())
    }
}

fn build(op: CheckedOp, seed: u64) -> (Case, Vec<Tensor<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    match op {
        CheckedOp::Matmul => {
            let inputs = vec![uniform(&[2, 4, 5], -1.0, 1.0, r), uniform(&[2, 5, 3], -1.0, 1.0, r)];
            (Case::Matmul { proj: uniform(&[2, 4, 3], -1.0, 1.0, r) }, inputs)
        }
        CheckedOp::Sigmoid => {
            let inputs = vec![uniform(&[3, 4, 2], -4.0, 4.0, r)];
            (Case::Sigmoid { proj: uniform(&[3, 4, 2], -1.0, 1.0, r) }, inputs)
        }
        CheckedOp::Conv1x1 => {
            let inputs = vec![uniform(&[1, 3, 4, 5], -1.0, 1.0, r), uniform(&[5, 3], -1.0, 1.0, r), uniform(&[3], -1.0, 1.0, r)];
            (Case::Conv1x1 { proj: uniform(&[1, 3, 4, 3], -1.0, 1.0, r) }, inputs)
        }
        CheckedOp::Cab => {
            let c = 4;
            let mut inputs = vec![uniform(&[1, 3, 4, c], -1.0, 1.0, r)];
            for shape in [&[c, c][..], &[c], &[c, c], &[c], &[c, c], &[c], &[3 * c, c], &[c]] {
                inputs.push(uniform(shape, -0.5, 0.5, r));
            }
            (Case::Cab { proj: uniform(&[1, 3, 4, c], -1.0, 1.0, r) }, inputs)
        }
        CheckedOp::Dice => {
            let shape = [6, 7, 1];
            let gt = Tensor::from_fn(&shape, |_| r.random_bool(0.4) as u8 as f64);
            let ignore = Tensor::from_fn(&shape, |_| r.random_bool(0.15) as u8 as f64);
            let pred = uniform(&shape, 0.05, 0.95, r);
            (Case::Dice { gt, ignore }, vec![pred])
        }
        CheckedOp::SmoothL1 => {
            let shape = [5, 6, 4];
            let gt = uniform(&shape, -3.0, 3.0, r);
            // Keep every residual at least 0.05 away from the kink at |d| = 1.
            let pred = Tensor::from_fn(&shape, |i| {
                let mag = if r.random_bool(0.5) { r.random_range(0.0..0.95) } else { r.random_range(1.05..4.0) };
                let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
                gt.data()[i] + sign * mag
            });
            let mask = Tensor::from_fn(&[5, 6, 1], |_| r.random_bool(0.6) as u8 as f64);
            (Case::SmoothL1 { gt, mask }, vec![pred])
        }
    }
}

fn finish(op: CheckedOp, seed: u64, corrupted: bool, r: GradCheckReport) -> OpCheck {
    OpCheck { op, seed, corrupted, max_rel_err: r.max_rel_err, worst_index: r.worst_index, passed: r.passed }
}

/// Checks `op` on inputs drawn from `seed`.
pub fn check_op(op: CheckedOp, seed: u64, eps: f64, tol: f64) -> Result<OpCheck> {
    let (case, inputs) = build(op, seed);
    Ok(finish(op, seed, false, grad_check(&case, &inputs, eps, tol)?))
}

/// Same inputs as [`check_op`] but with the analytic gradient doubled; a
/// sound checker reports `passed = false`.
pub fn check_op_corrupted(op: CheckedOp, seed: u64, eps: f64, tol: f64) -> Result<OpCheck> {
    let (case, inputs) = build(op, seed);
    Ok(finish(op, seed, true, grad_check(&Doubled(&case), &inputs, eps, tol)?))
}

/// Runs each op at seeds `seed, seed + 1, ..., seed + n_seeds - 1`.
pub fn check_all(ops: &[CheckedOp], seed: u64, n_seeds: usize, eps: f64, tol: f64) -> Result<Vec<OpCheck>> {
    let mut out = Vec::with_capacity(ops.len() * n_seeds);
    for &op in ops {
        for s in seed..seed + n_seeds as u64 {
            out.push(check_op(op, s, eps, tol)?);
        }
    }
    Ok(out)
}
