//! Loss functions and their Lipschitz constants in the prediction argument.
//!
//! The generalization machinery needs `|ℓ(a, y) − ℓ(b, y)| ≤ L_ℓ ‖a − b‖`:
//! the L1 loss is 1-Lipschitz (in the ℓ1 metric on predictions, which the
//! coordinate-wise covering argument pairs with), and softmax cross-entropy
//! is 2-Lipschitz in ℓ2 since its gradient `softmax(z) − y` never exceeds
//! norm 2.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use serde::{Deserialize, Serialize};

/// Supported losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L1,
    CrossEntropySoftmax,
}

impl LossKind {
    /// Lipschitz constant `L_ℓ` in the prediction argument.
    pub fn lipschitz_constant(self) -> f64 {
        match self {
            LossKind::L1 => 1.0,
            LossKind::CrossEntropySoftmax => 2.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::CrossEntropySoftmax => "ce",
        }
    }
}

impl core::fmt::Display for LossKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("prediction has length {pred}, target has length {target}")]
    DimensionMismatch { pred: usize, target: usize },
    #[error("empty prediction vector")]
    Empty,
    #[error("target is not exactly one-hot (entry {index} is {value})")]
    NotOneHot { index: usize, value: f64 },
}

fn check_dims(pred: &[f64], target: &[f64]) -> Result<(), LossError> {
    if pred.is_empty() {
        return Err(LossError::Empty);
    }
    if pred.len() != target.len() {
        return Err(LossError::DimensionMismatch { pred: pred.len(), target: target.len() });
    }
    Ok(())
}

/// Index of the single `1.0` in an exact one-hot vector; every other entry
/// must be exactly `0.0`.
fn one_hot_index(target: &[f64]) -> Result<usize, LossError> {
    let mut hot = None;
    for (i, &t) in target.iter().enumerate() {
        if t == 1.0 {
            if hot.is_some() {
                return Err(LossError::NotOneHot { index: i, value: t });
            }
            hot = Some(i);
        } else if t != 0.0 {
            return Err(LossError::NotOneHot { index: i, value: t });
        }
    }
    hot.ok_or(LossError::NotOneHot { index: 0, value: target.first().copied().unwrap_or(0.0) })
}

/// `‖pred − target‖₁`.
pub fn l1_loss(pred: &[f64], target: &[f64]) -> Result<f64, LossError> {
    check_dims(pred, target)?;
    Ok(pred.iter().zip(target.iter()).map(|(p, t)| (p - t).abs()).sum())
}

/// A subgradient of the L1 loss: `sign(pred − target)` coordinate-wise
/// (zero on exact ties).
pub fn l1_subgrad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>, LossError> {
    check_dims(pred, target)?;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(p, t)| {
            let d = p - t;
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect())
}

/// Softmax cross-entropy against an exact one-hot target, computed as
/// `ln Σ exp(z_i − max z) − (z_k − max z)`. The shift makes every exponent
/// nonpositive, so arbitrarily large logits cannot overflow.
pub fn ce_softmax_loss(logits: &[f64], target: &[f64]) -> Result<f64, LossError> {
    check_dims(logits, target)?;
    let hot = one_hot_index(target)?;
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    Ok(sum.ln() - (logits[hot] - max))
}

/// Gradient of [`ce_softmax_loss`] in the logits: `softmax(z) − target`.
pub fn ce_softmax_grad(logits: &[f64], target: &[f64]) -> Result<Vec<f64>, LossError> {
    check_dims(logits, target)?;
    one_hot_index(target)?;
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for (o, t) in out.iter_mut().zip(target.iter()) {
        *o = *o / sum - t;
    }
    Ok(out)
}

/// Loss dispatch by kind.
pub fn loss_value(kind: LossKind, pred: &[f64], target: &[f64]) -> Result<f64, LossError> {
    match kind {
        LossKind::L1 => l1_loss(pred, target),
        LossKind::CrossEntropySoftmax => ce_softmax_loss(pred, target),
    }
}

/// (Sub)gradient dispatch by kind, in the prediction argument.
pub fn loss_grad(kind: LossKind, pred: &[f64], target: &[f64]) -> Result<Vec<f64>, LossError> {
    match kind {
        LossKind::L1 => l1_subgrad(pred, target),
        LossKind::CrossEntropySoftmax => ce_softmax_grad(pred, target),
    }
}
