//! Per-class sigmoid objectives: vanilla logistic regression and the two
//! negative-class selection variants.
//!
//! Log terms use the softplus identities `-ln σ(z) = softplus(-z)` and
//! `-ln(1 - σ(z)) = softplus(z)`.

use crate::error::{Error, Result};
use crate::math::{log_sigmoid_unchecked, sigmoid_unchecked, softplus, Logits, ProbVector};
use crate::scalar::Scalar;

use super::selection::top_negatives;
use super::{check_shapes, require_negatives, LossConfig, LossOutput, TargetLabels};

/// Sum of binary cross-entropies over all classes.
pub fn lr_loss<T: Scalar>(z: &Logits<T>, y: &TargetLabels) -> Result<LossOutput<T>> {
    check_shapes(z, y)?;
    let mut grad = Vec::with_capacity(z.len());
    let (mut pos, mut neg) = (T::zero(), T::zero());
    for (k, &zk) in z.as_slice().iter().enumerate() {
        if y.contains(k) {
            pos = pos + softplus(-zk);
            grad.push(-sigmoid_unchecked(-zk));
        } else {
            neg = neg + softplus(zk);
            grad.push(sigmoid_unchecked(zk));
        }
    }
    Ok(LossOutput::assemble(grad, pos, neg, y, None))
}

/// Logistic loss restricted to the hardest `m` percent of negatives, which are
/// weighted by `beta / n_selected`. Unselected negatives get exactly zero
/// gradient.
pub fn hs_lr_loss<T: Scalar>(
    z: &Logits<T>,
    y: &TargetLabels,
    cfg: &LossConfig,
) -> Result<LossOutput<T>> {
    check_shapes(z, y)?;
    let p = ProbVector::from_sigmoid(z);
    let selected = top_negatives(p.as_slice(), y, cfg.m)?;
    let alpha = T::lit(cfg.beta / selected.len() as f64);

    let mut in_selection = vec![false; z.len()];
    for &k in &selected {
        in_selection[k] = true;
    }

    let mut grad = vec![T::zero(); z.len()];
    let (mut pos, mut neg_sum) = (T::zero(), T::zero());
    for (k, &zk) in z.as_slice().iter().enumerate() {
        if y.contains(k) {
            pos = pos + softplus(-zk);
            grad[k] = -sigmoid_unchecked(-zk);
        } else if in_selection[k] {
            neg_sum = neg_sum + softplus(zk);
            grad[k] = alpha * p.as_slice()[k];
        }
    }
    Ok(LossOutput::assemble(
        grad,
        pos,
        alpha * neg_sum,
        y,
        Some(selected),
    ))
}

/// Logistic loss where every negative is weighted by `p_k^r` (and all of them
/// by `beta / (K - |positives|)`), so confident negatives fade out.
///
/// By default the gradient differentiates through `p_k^r`; with
/// `cfg.detach_weight` the weight is held constant. `0^0` is taken as 1, so
/// `r = 0` reproduces [`hs_lr_loss`] at `m = 100`.
pub fn ss_lr_loss<T: Scalar>(
    z: &Logits<T>,
    y: &TargetLabels,
    cfg: &LossConfig,
) -> Result<LossOutput<T>> {
    check_shapes(z, y)?;
    if !(cfg.r >= 0.0 && cfg.r.is_finite()) {
        return Err(Error::invalid_config(format!(
            "soft-selection exponent r = {} must be >= 0",
            cfg.r
        )));
    }
    require_negatives(y)?;
    let alpha = T::lit(cfg.beta / y.negative_count() as f64);
    let r = T::lit(cfg.r);

    let mut grad = Vec::with_capacity(z.len());
    let (mut pos, mut neg_sum) = (T::zero(), T::zero());
    for (k, &zk) in z.as_slice().iter().enumerate() {
        if y.contains(k) {
            pos = pos + softplus(-zk);
            grad.push(-sigmoid_unchecked(-zk));
            continue;
        }
        let p = sigmoid_unchecked(zk);
        // p^r through the log keeps p -> 0 finite and gives 0^0 = 1 at r = 0.
        let weight = (r * log_sigmoid_unchecked(zk)).exp();
        let nll = softplus(zk);
        neg_sum = neg_sum + weight * nll;
        let g = if cfg.detach_weight {
            weight * p
        } else {
            // d/dz [p^r] = r p^r (1 - p), d/dz [softplus(z)] = p
            r * weight * sigmoid_unchecked(-zk) * nll + weight * p
        };
        grad.push(alpha * g);
    }
    Ok(LossOutput::assemble(grad, pos, alpha * neg_sum, y, None))
}
