//! Context attention block: criss-cross self-attention along rows and
//! columns with shared projections, a shortcut, and a 1x1 channel reduction.
//!
//! For input `x` of shape `[N, H, W, C]`:
//!
//! 1. `theta`, `phi`, `g` are 1x1 convolutions of `x` (C -> C each).
//! 2. Horizontal branch: rows become a batch of `N*H` sequences of length
//!    `W`; `A = sigmoid(phi · thetaᵀ)` is `[N*H, W, W]` and the branch
//!    output is `A · g`.
//! 3. Vertical branch: the same projections, with columns as sequences
//!    (`[N*W, H, C]`).
//! 4. Output: `conv1x1(concat[horizontal, vertical, x])` back to `C`
//!    channels, so blocks stack.
//!
//! Logits are not scaled and attention rows are not normalized.

use rand::Rng;

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::tensor::{
    concat_last, conv1x1_backward, conv1x1_with, matmul_backward, matmul_with, sigmoid, sigmoid_backward, split_last, Element, Tensor,
};

/// Channel counts of the four prediction heads fed by the context features.
pub const HEAD_CHANNELS: [usize; 4] = [1, 2, 8, 4];
/// Width of the context feature map the heads read from.
pub const FEATURE_CHANNELS: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct CabWeights<T = f32> {
    pub theta: Tensor<T>,
    pub theta_bias: Tensor<T>,
    pub phi: Tensor<T>,
    pub phi_bias: Tensor<T>,
    pub g: Tensor<T>,
    pub g_bias: Tensor<T>,
    /// `[3C, C]`: rows `0..C` read the horizontal branch, `C..2C` the
    /// vertical branch, `2C..3C` the shortcut.
    pub reduce: Tensor<T>,
    pub reduce_bias: Tensor<T>,
}

impl<T: Element> CabWeights<T> {
    /// Seeded uniform weights in `[-0.1, 0.1]` with zero biases.
    pub fn random<R: Rng + ?Sized>(c: usize, rng: &mut R) -> Self {
        let mut w = |shape: &[usize]| Tensor::random_uniform(shape, -0.1, 0.1, rng);
        let theta = w(&[c, c]);
        let phi = w(&[c, c]);
        let g = w(&[c, c]);
        let reduce = w(&[3 * c, c]);
        Self {
            theta,
            theta_bias: Tensor::zeros(&[c]),
            phi,
            phi_bias: Tensor::zeros(&[c]),
            g,
            g_bias: Tensor::zeros(&[c]),
            reduce,
            reduce_bias: Tensor::zeros(&[c]),
        }
    }

    /// Weights for which the block is the identity: `g` is zero so both
    /// attention branches vanish, and the reduction copies the shortcut.
    pub fn passthrough(c: usize) -> Self {
        let eye = |n: usize| Tensor::from_fn(&[n, n], |i| if i / n == i % n { T::one() } else { T::zero() });
        let reduce = Tensor::from_fn(&[3 * c, c], |i| {
            let (row, col) = (i / c, i % c);
            if row >= 2 * c && row - 2 * c == col {
                T::one()
            } else {
                T::zero()
            }
        });
        Self {
            theta: eye(c),
            theta_bias: Tensor::zeros(&[c]),
            phi: eye(c),
            phi_bias: Tensor::zeros(&[c]),
            g: Tensor::zeros(&[c, c]),
            g_bias: Tensor::zeros(&[c]),
            reduce,
            reduce_bias: Tensor::zeros(&[c]),
        }
    }

    pub fn channels(&self) -> usize {
        self.theta.shape()[0]
    }

    pub fn zeros_like(&self) -> Self {
        Self::from_tensors(self.tensors().map(|t| Tensor::zeros(t.shape())))
    }

    /// The eight parameter tensors in declaration order.
    pub fn tensors(&self) -> [&Tensor<T>; 8] {
        [&self.theta, &self.theta_bias, &self.phi, &self.phi_bias, &self.g, &self.g_bias, &self.reduce, &self.reduce_bias]
    }

    pub fn from_tensors(t: [Tensor<T>; 8]) -> Self {
        let [theta, theta_bias, phi, phi_bias, g, g_bias, reduce, reduce_bias] = t;
        Self { theta, theta_bias, phi, phi_bias, g, g_bias, reduce, reduce_bias }
    }

    fn validate(&self, c: usize) -> Result<()> {
        let want: [&[usize]; 8] = [&[c, c], &[c], &[c, c], &[c], &[c, c], &[c], &[3 * c, c], &[c]];
        for (t, w) in self.tensors().iter().zip(want) {
            if t.shape() != w {
                return Err(Error::Shape(format!("cab weight {:?}, expected {w:?} for C={c}", t.shape())));
            }
            if !t.all_finite() {
                return Err(Error::Numeric("cab weights contain non-finite values".into()));
            }
        }
        Ok(())
    }
}

struct Branch<T> {
    theta: Tensor<T>,
    phi: Tensor<T>,
    g: Tensor<T>,
    attn: Tensor<T>,
}

/// Intermediates kept by [`cab_forward_cached`] for the backward pass.
pub struct CabCache<T> {
    x: Tensor<T>,
    horizontal: Branch<T>,
    vertical: Branch<T>,
    cat: Tensor<T>,
}

impl<T: Element> CabCache<T> {
    /// Horizontal attention, `[N*H, W, W]`.
    pub fn attention_h(&self) -> &Tensor<T> {
        &self.horizontal.attn
    }

    /// Vertical attention, `[N*W, H, H]`.
    pub fn attention_v(&self) -> &Tensor<T> {
        &self.vertical.attn
    }
}

fn dims<T: Element>(x: &Tensor<T>) -> Result<[usize; 4]> {
    match *x.shape() {
        [n, h, w, c] => Ok([n, h, w, c]),
        _ => Err(Error::Shape(format!("cab input must be [N, H, W, C], got {:?}", x.shape()))),
    }
}

/// Swaps the H and W axes of an `[N, H, W, C]` tensor.
fn swap_hw<T: Element>(t: &Tensor<T>) -> Result<Tensor<T>> {
    t.permute(&[0, 2, 1, 3])
}

fn attend<T: Element>(exec: Execution, theta: Tensor<T>, phi: Tensor<T>, g: Tensor<T>) -> Result<(Tensor<T>, Branch<T>)> {
    let logits = matmul_with(exec, &phi, &theta.transpose()?)?;
    let attn = sigmoid(&logits);
    let out = matmul_with(exec, &attn, &g)?;
    Ok((out, Branch { theta, phi, g, attn }))
}

fn attend_backward<T: Element>(b: &Branch<T>, grad_out: &Tensor<T>) -> Result<[Tensor<T>; 3]> {
    let (grad_attn, grad_g) = matmul_backward(&b.attn, &b.g, grad_out)?;
    let grad_logits = sigmoid_backward(&b.attn, &grad_attn)?;
    let (grad_phi, grad_theta_t) = matmul_backward(&b.phi, &b.theta.transpose()?, &grad_logits)?;
    Ok([grad_theta_t.transpose()?, grad_phi, grad_g])
}

pub fn cab_forward<T: Element>(x: &Tensor<T>, w: &CabWeights<T>) -> Result<Tensor<T>> {
    Ok(cab_forward_cached(Execution::Sequential, x, w)?.0)
}

pub fn cab_forward_cached<T: Element>(exec: Execution, x: &Tensor<T>, w: &CabWeights<T>) -> Result<(Tensor<T>, CabCache<T>)> {
    let [n, h, wd, c] = dims(x)?;
    w.validate(c)?;
    let theta = conv1x1_with(exec, x, &w.theta, &w.theta_bias)?;
    let phi = conv1x1_with(exec, x, &w.phi, &w.phi_bias)?;
    let g = conv1x1_with(exec, x, &w.g, &w.g_bias)?;

    let rows = |t: &Tensor<T>| t.reshape(&[n * h, wd, c]);
    let (out_h, horizontal) = attend(exec, rows(&theta)?, rows(&phi)?, rows(&g)?)?;
    let out_h = out_h.into_reshaped(&[n, h, wd, c])?;

    let cols = |t: &Tensor<T>| swap_hw(t)?.into_reshaped(&[n * wd, h, c]);
    let (out_v, vertical) = attend(exec, cols(&theta)?, cols(&phi)?, cols(&g)?)?;
    let out_v = swap_hw(&out_v.into_reshaped(&[n, wd, h, c])?)?;

    let cat = concat_last(&[&out_h, &out_v, x])?;
    let out = conv1x1_with(exec, &cat, &w.reduce, &w.reduce_bias)?;
    Ok((out, CabCache { x: x.clone(), horizontal, vertical, cat }))
}

/// Exact gradients of [`cab_forward`] with respect to the input and all
/// eight weight tensors.
pub fn cab_backward<T: Element>(x: &Tensor<T>, w: &CabWeights<T>, upstream: &Tensor<T>) -> Result<(Tensor<T>, CabWeights<T>)> {
    let (out, cache) = cab_forward_cached(Execution::Sequential, x, w)?;
    out.check_same_shape(upstream)?;
    if !upstream.all_finite() {
        return Err(Error::Numeric("upstream gradient".into()));
    }
    cab_backward_cached(&cache, w, upstream)
}

pub fn cab_backward_cached<T: Element>(cache: &CabCache<T>, w: &CabWeights<T>, upstream: &Tensor<T>) -> Result<(Tensor<T>, CabWeights<T>)> {
    let x = &cache.x;
    let [n, h, wd, c] = dims(x)?;
    let (grad_cat, grad_reduce, grad_reduce_bias) = conv1x1_backward(&cache.cat, &w.reduce, upstream)?;
    let mut parts = split_last(&grad_cat, &[c, c, c])?.into_iter();
    let (grad_out_h, grad_out_v, mut grad_x) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());

    let gh = attend_backward(&cache.horizontal, &grad_out_h.into_reshaped(&[n * h, wd, c])?)?;
    let gv = attend_backward(&cache.vertical, &swap_hw(&grad_out_v)?.into_reshaped(&[n * wd, h, c])?)?;

    let mut proj_grads = Vec::with_capacity(3);
    for (from_h, from_v) in gh.into_iter().zip(gv) {
        let mut total = from_h.into_reshaped(&[n, h, wd, c])?;
        total.add_assign(&swap_hw(&from_v.into_reshaped(&[n, wd, h, c])?)?)?;
        proj_grads.push(total);
    }
    let mut conv_grads = Vec::with_capacity(3);
    for (gproj, weight) in proj_grads.iter().zip([&w.theta, &w.phi, &w.g]) {
        let (gx, gw, gb) = conv1x1_backward(x, weight, gproj)?;
        grad_x.add_assign(&gx)?;
        conv_grads.push((gw, gb));
    }
    let mut it = conv_grads.into_iter();
    let (gt, gtb) = it.next().unwrap();
    let (gp, gpb) = it.next().unwrap();
    let (gg, ggb) = it.next().unwrap();
    Ok((grad_x, CabWeights::from_tensors([gt, gtb, gp, gpb, gg, ggb, grad_reduce, grad_reduce_bias])))
}

/// Two blocks in series; each output pixel then depends on every input pixel.
pub fn cab_stack2<T: Element>(x: &Tensor<T>, w1: &CabWeights<T>, w2: &CabWeights<T>) -> Result<Tensor<T>> {
    cab_forward(&cab_forward(x, w1)?, w2)
}
