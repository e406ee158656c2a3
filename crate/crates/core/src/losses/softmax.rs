//! Softmax cross-entropy and its hard-selection counterpart.

use crate::error::{Error, Result};
use crate::math::{log_softmax_slice, log_sum_exp, Logits};
use crate::scalar::Scalar;

use super::selection::top_negatives;
use super::{check_shapes, LossConfig, LossOutput, TargetLabels};

fn single_label(y: &TargetLabels, what: &str) -> Result<usize> {
    y.single_label().ok_or_else(|| {
        Error::UnsupportedVariant(format!(
            "{what} needs exactly one label, got {}",
            y.positives().len()
        ))
    })
}

/// `-ln softmax(z)_y`. The whole value is reported as `pos_loss`; the
/// gradient norms split the `y` entry from the rest.
pub fn sr_loss<T: Scalar>(z: &Logits<T>, y: &TargetLabels) -> Result<LossOutput<T>> {
    check_shapes(z, y)?;
    let label = single_label(y, "softmax regression")?;
    let log_p = log_softmax_slice(z.as_slice());
    let grad: Vec<T> = log_p
        .iter()
        .enumerate()
        .map(|(k, &lp)| {
            if k == label {
                lp.exp() - T::one()
            } else {
                lp.exp()
            }
        })
        .collect();
    Ok(LossOutput::assemble(
        grad,
        -log_p[label],
        T::zero(),
        y,
        None,
    ))
}

/// `ln(1 - p_k)` for a softmax entry, accurate whether `p_k` is tiny or near one.
fn log_complement<T: Scalar>(z: &[T], k: usize, log_p: T, lse: T) -> T {
    let p = log_p.exp();
    if p <= T::lit(0.5) {
        (-p).ln_1p()
    } else {
        let rest: Vec<T> = z
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &v)| v)
            .collect();
        log_sum_exp(&rest) - lse
    }
}

/// Hard negative selection applied to softmax probabilities:
/// `-ln p_y - beta / n_sel * Σ_{k ∈ hardest} ln(1 - p_k)`, differentiated
/// through the full softmax Jacobian.
pub fn hs_sr_loss<T: Scalar>(
    z: &Logits<T>,
    y: &TargetLabels,
    cfg: &LossConfig,
) -> Result<LossOutput<T>> {
    check_shapes(z, y)?;
    let label = single_label(y, "hard-selection softmax")?;
    let zs = z.as_slice();
    let lse = log_sum_exp(zs);
    let log_p: Vec<T> = zs.iter().map(|&v| v - lse).collect();
    let p: Vec<T> = log_p.iter().map(|v| v.exp()).collect();

    let selected = top_negatives(&p, y, cfg.m)?;
    let alpha = T::lit(cfg.beta / selected.len() as f64);

    // With w_k = p_k / (1 - p_k) and W = Σ_selected w_k:
    //   dL/dz_j = p_j - [j = y] + alpha * (w_j [j selected] - p_j W)
    // For selected j, w_j - p_j W = p_j (1 - (W - w_j)). At most one selected
    // class has p > 1/2 and so a large w; keeping it out of the running sum
    // avoids cancelling it against itself.
    let mut odds = vec![T::zero(); zs.len()];
    let mut is_selected = vec![false; zs.len()];
    let mut neg_sum = T::zero();
    let mut big = None;
    let mut small_odds = T::zero();
    for &k in &selected {
        let log_q = log_complement(zs, k, log_p[k], lse);
        neg_sum = neg_sum - log_q;
        odds[k] = (log_p[k] - log_q).exp();
        is_selected[k] = true;
        if p[k] > T::lit(0.5) {
            big = Some(k);
        } else {
            small_odds = small_odds + odds[k];
        }
    }
    let big_odds = big.map_or(T::zero(), |k| odds[k]);

    let grad: Vec<T> = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let ce = if j == label { pj - T::one() } else { pj };
            let focus = if !is_selected[j] {
                -pj * (small_odds + big_odds)
            } else if big == Some(j) {
                pj * (T::one() - small_odds)
            } else {
                pj * (T::one() - (small_odds - odds[j] + big_odds))
            };
            ce + alpha * focus
        })
        .collect();

    Ok(LossOutput::assemble(
        grad,
        -log_p[label],
        alpha * neg_sum,
        y,
        Some(selected),
    ))
}
