//! Central finite-difference check of the analytic loss gradients.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::{log_sigmoid_unchecked, softplus, Logits, SeededRng};

use super::selection::selection_count;
use super::{evaluate, LossConfig, TargetLabels, Variant};

const STEP: f64 = 1e-6;
/// Hard-selection draws whose selection boundary is closer than this in logit
/// space are redrawn: the loss is not differentiable where the selected set
/// changes.
const TIE_GAP: f64 = 1e-4;
const MAX_REDRAWS_PER_TRIAL: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub variant: Variant,
    pub detach_weight: bool,
    pub classes: usize,
    pub trials: usize,
    /// Max over trials of `‖g - g_fd‖∞ / (‖g_fd‖∞ + 1e-12)`.
    pub max_rel_error: f64,
    /// Draws rejected for sitting on a hard-selection boundary.
    pub redraws: usize,
}

/// Soft-selection loss with every negative weight frozen at its value at
/// `base`. Its derivative at `base` is what the detached mode returns.
fn frozen_weight_loss(cfg: &LossConfig, base: &[f64], z: &[f64], y: &TargetLabels) -> f64 {
    let alpha = cfg.beta / y.negative_count() as f64;
    let (mut pos, mut neg) = (0.0, 0.0);
    for (k, (&b, &zk)) in base.iter().zip(z).enumerate() {
        if y.contains(k) {
            pos += softplus(-zk);
        } else {
            neg += (cfg.r * log_sigmoid_unchecked(b)).exp() * softplus(zk);
        }
    }
    pos + alpha * neg
}

/// Relative error between the analytic gradient and central differences at
/// one point. For the detached soft-selection mode the differences are taken
/// with the focus weights held at their values at `z`.
pub fn gradient_error(cfg: &LossConfig, z: &[f64], y: &TargetLabels) -> Result<f64> {
    let analytic = evaluate(&Logits::from_slice(z)?, y, cfg)?.grad;
    let frozen = cfg.variant == Variant::SsLr && cfg.detach_weight;
    let loss_at = |probe: &[f64]| -> Result<f64> {
        if frozen {
            Logits::from_slice(probe)?;
            Ok(frozen_weight_loss(cfg, z, probe, y))
        } else {
            Ok(evaluate(&Logits::from_slice(probe)?, y, cfg)?.loss)
        }
    };
    let mut probe = z.to_vec();
    let mut worst_diff = 0.0_f64;
    let mut fd_norm = 0.0_f64;
    for j in 0..z.len() {
        probe[j] = z[j] + STEP;
        let up = loss_at(&probe)?;
        probe[j] = z[j] - STEP;
        let down = loss_at(&probe)?;
        probe[j] = z[j];
        let fd = (up - down) / (2.0 * STEP);
        worst_diff = worst_diff.max((analytic[j] - fd).abs());
        fd_norm = fd_norm.max(fd.abs());
    }
    Ok(worst_diff / (fd_norm + 1e-12))
}

fn near_selection_boundary(cfg: &LossConfig, z: &[f64], y: &TargetLabels) -> Result<bool> {
    if !matches!(cfg.variant, Variant::HsLr | Variant::HsSr) {
        return Ok(false);
    }
    let n_sel = selection_count(y.classes(), y.positives().len(), cfg.m)?;
    let mut neg: Vec<f64> = (0..z.len())
        .filter(|&k| !y.contains(k))
        .map(|k| z[k])
        .collect();
    if n_sel >= neg.len() {
        return Ok(false);
    }
    neg.sort_by(|a, b| b.total_cmp(a));
    Ok(neg[n_sel - 1] - neg[n_sel] < TIE_GAP)
}

/// Draws `trials` points `z ~ N(0, 1)^K` with a uniformly random single label
/// and returns the worst finite-difference disagreement (step `1e-6`).
pub fn grad_check(
    cfg: &LossConfig,
    classes: usize,
    trials: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if trials == 0 {
        return Err(Error::invalid_input("grad_check needs at least one trial"));
    }
    if classes < 2 {
        return Err(Error::invalid_input("grad_check needs at least 2 classes"));
    }
    cfg.validate()?;
    let mut rng = SeededRng::new(seed);
    let mut max_rel_error = 0.0_f64;
    let mut redraws = 0;
    for _ in 0..trials {
        let mut attempts = 0;
        let (z, y) = loop {
            let z: Vec<f64> = (0..classes).map(|_| rng.normal()).collect();
            let y = TargetLabels::single(rng.below(classes), classes)?;
            if !near_selection_boundary(cfg, &z, &y)? {
                break (z, y);
            }
            redraws += 1;
            attempts += 1;
            if attempts > MAX_REDRAWS_PER_TRIAL {
                return Err(Error::InsufficientData(
                    "could not draw a point away from the selection boundary".into(),
                ));
            }
        };
        max_rel_error = max_rel_error.max(gradient_error(cfg, &z, &y)?);
    }
    Ok(GradCheckReport {
        variant: cfg.variant,
        detach_weight: cfg.detach_weight,
        classes,
        trials,
        max_rel_error,
        redraws,
    })
}
