//! Multi-task objective: soft Dice on the TCL map and masked Smooth-L1 on the
//! three offset maps, combined with fixed weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::MapBundle;
use crate::tensor::{from_f64, to_f64, Element, Tensor};

pub const DICE_EPS: f64 = 1e-6;
const NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { l1: 1.0, l2: 0.5, l3: 0.5, l4: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.l1, self.l2, self.l3, self.l4].iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("loss weights must be non-negative: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub tcl: f64,
    pub tco: f64,
    pub tvo: f64,
    pub tbo: f64,
    pub total: f64,
}

/// `1 - 2 Σpg / (Σp² + Σg² + 1e-6)` over pixels where `ignore` is zero.
/// Returns the loss and its gradient with respect to `pred`.
pub fn dice_loss<T: Element>(pred: &Tensor<T>, gt: &Tensor<T>, ignore: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    pred.check_same_shape(gt)?;
    pred.check_same_shape(ignore)?;
    let keep = |i: usize| to_f64(ignore.data()[i]) == 0.0;
    let (mut inter, mut denom) = (0.0, DICE_EPS);
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if keep(i) {
            let (p, g) = (to_f64(p), to_f64(g));
            inter += p * g;
            denom += p * p + g * g;
        }
    }
    let loss = 1.0 - 2.0 * inter / denom;
    let grad = (0..pred.len())
        .map(|i| {
            if !keep(i) {
                return T::zero();
            }
            let (p, g) = (to_f64(pred.data()[i]), to_f64(gt.data()[i]));
            from_f64(-2.0 * (g * denom - 2.0 * p * inter) / (denom * denom))
        })
        .collect();
    Ok((loss, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Mean Smooth-L1 (transition at 1) of `pred - gt` over masked pixels.
/// `mask` holds one value per pixel, i.e. the shape of `pred` without its
/// last (channel) axis, optionally with a trailing axis of 1.
pub fn smooth_l1<T: Element>(pred: &Tensor<T>, gt: &Tensor<T>, mask: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    pred.check_same_shape(gt)?;
    let channels = *pred.shape().last().unwrap();
    let pixel_shape = &pred.shape()[..pred.rank() - 1];
    let ms = mask.shape();
    let broadcastable = ms == pixel_shape || (ms.len() == pred.rank() && ms[..ms.len() - 1] == *pixel_shape && ms[ms.len() - 1] == 1);
    if !broadcastable {
        return Err(Error::Shape(format!("mask {ms:?} does not broadcast to {:?}", pred.shape())));
    }
    let masked: Vec<bool> = mask.data().iter().map(|&m| to_f64(m) != 0.0).collect();
    let count = masked.iter().filter(|&&m| m).count();
    let mut grad = Tensor::zeros(pred.shape());
    if count == 0 {
        return Ok((0.0, grad));
    }
    let norm = (count * channels) as f64 + NORM_EPS;
    let mut total = 0.0;
    for (i, g) in grad.data_mut().iter_mut().enumerate() {
        if !masked[i / channels] {
            continue;
        }
        let d = to_f64(pred.data()[i]) - to_f64(gt.data()[i]);
        let (v, dv) = if d.abs() < 1.0 { (0.5 * d * d, d) } else { (d.abs() - 0.5, d.signum()) };
        total += v;
        *g = from_f64(dv / norm);
    }
    Ok((total / norm, grad))
}

/// Weighted sum of the four terms. Regression terms are supervised only on
/// ground-truth TCL pixels outside the ignore mask.
pub fn total_loss(pred: &MapBundle, gt: &MapBundle, ignore: &Tensor<f32>, w: &LossWeights) -> Result<LossBreakdown> {
    w.validate()?;
    pred.validate()?;
    gt.validate()?;
    gt.tcl.check_same_shape(&pred.tcl)?;
    let mask = gt.tcl.zip_map(ignore, |t, i| if t > 0.5 && i == 0.0 { 1.0 } else { 0.0 })?;
    let tcl = dice_loss(&pred.tcl, &gt.tcl, ignore)?.0;
    let tco = smooth_l1(&pred.tco, &gt.tco, &mask)?.0;
    let tvo = smooth_l1(&pred.tvo, &gt.tvo, &mask)?.0;
    let tbo = smooth_l1(&pred.tbo, &gt.tbo, &mask)?.0;
    Ok(LossBreakdown { tcl, tco, tvo, tbo, total: w.l1 * tcl + w.l2 * tco + w.l3 * tvo + w.l4 * tbo })
}
