//! Soft-Dice loss over predicted probabilities.

use crate::error::{Error, Result};
use crate::model::tensor::Tensor4;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiceLossConfig {
    /// Smoothing constant; keeps empty-mask patches well behaved.
    pub epsilon: f64,
}

impl Default for DiceLossConfig {
    fn default() -> Self {
        DiceLossConfig { epsilon: 1.0 }
    }
}

/// D = (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps), pooled over the whole
/// tensor; returns (loss = 1 - D, dloss/dpred).
pub fn soft_dice_loss(pred: &Tensor4, target: &Tensor4, epsilon: f64) -> Result<(f64, Tensor4)> {
    if pred.shape != target.shape {
        return Err(Error::ShapeMismatch(format!(
            "dice pred {:?} vs target {:?}",
            pred.shape, target.shape
        )));
    }
    if target.data.iter().any(|&g| g != 0.0 && g != 1.0) {
        return Err(Error::Config("dice target must be binary".into()));
    }
    let mut inter = 0.0f64;
    let mut sum_p = 0.0f64;
    let mut sum_g = 0.0f64;
    for (&p, &g) in pred.data.iter().zip(&target.data) {
        inter += p * g;
        sum_p += p;
        sum_g += g;
    }
    let num = 2.0 * inter + epsilon;
    let den = sum_p + sum_g + epsilon;
    let dice = num / den;
    // d(1-D)/dp_i = -(2*g_i*den - num) / den^2
    let inv_den2 = 1.0 / (den * den);
    let mut grad = Tensor4::zeros(pred.shape);
    for (gd, &g) in grad.data.iter_mut().zip(&target.data) {
        *gd = -(2.0 * g * den - num) * inv_den2;
    }
    Ok((1.0 - dice, grad))
}

/// The differentiable Dice value itself (1 - loss), for logging.
pub fn soft_dice(pred: &Tensor4, target: &Tensor4, epsilon: f64) -> Result<f64> {
    soft_dice_loss(pred, target, epsilon).map(|(loss, _)| 1.0 - loss)
}
