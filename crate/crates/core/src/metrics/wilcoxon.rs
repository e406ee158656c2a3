use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest sample size handled by the exact null distribution.
pub const EXACT_MAX_N: usize = 20;

const MIN_N: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub method: WilcoxonMethod,
}

/// Nonzero differences with their doubled mid-ranks of `|d|` (integers even
/// under ties).
fn signed_ranks(a: &[f64], b: &[f64]) -> Result<Vec<(f64, u64)>> {
    if a.len() != b.len() {
        return Err(Error::invalid_input(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("paired difference".into()));
    }
    if diffs.len() < MIN_N {
        return Err(Error::InsufficientData(format!(
            "{} nonzero paired differences, need at least {MIN_N}",
            diffs.len()
        )));
    }
    diffs.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let mut out = Vec::with_capacity(diffs.len());
    let mut i = 0;
    while i < diffs.len() {
        let mut j = i;
        while j + 1 < diffs.len() && diffs[j + 1].abs() == diffs[i].abs() {
            j += 1;
        }
        // ranks i+1 ..= j+1 share (i + j + 2) / 2; doubled that is i + j + 2
        let doubled = (i + j + 2) as u64;
        out.extend(diffs[i..=j].iter().map(|&d| (d, doubled)));
        i = j + 1;
    }
    Ok(out)
}

fn statistic(ranks: &[(f64, u64)]) -> (u64, u64) {
    let plus: u64 = ranks.iter().filter(|(d, _)| *d > 0.0).map(|(_, r)| r).sum();
    let total: u64 = ranks.iter().map(|(_, r)| r).sum();
    (plus, total - plus)
}

/// Exact two-sided p from the distribution of `W+` over all `2^n` sign
/// assignments, counted by dynamic programming over doubled rank sums.
pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    let ranks = signed_ranks(a, b)?;
    let (plus, minus) = statistic(&ranks);
    let total = (plus + minus) as usize;
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    for &(_, r) in &ranks {
        let r = r as usize;
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = 2f64.powi(ranks.len() as i32);
    let lower: f64 = counts[..=plus as usize].iter().sum::<f64>() / all;
    let upper: f64 = counts[plus as usize..].iter().sum::<f64>() / all;
    Ok(WilcoxonResult {
        statistic: plus.min(minus) as f64 / 2.0,
        p_value: (2.0 * lower.min(upper)).min(1.0),
        n: ranks.len(),
        method: WilcoxonMethod::Exact,
    })
}

/// Normal approximation with tie-corrected variance and continuity
/// correction.
pub fn wilcoxon_normal(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    let ranks = signed_ranks(a, b)?;
    let (plus, minus) = statistic(&ranks);
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut ties = 0.0;
    let mut i = 0;
    while i < ranks.len() {
        let j = ranks[i..]
            .iter()
            .take_while(|(_, r)| *r == ranks[i].1)
            .count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0;
    let w_plus = plus as f64 / 2.0;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(WilcoxonResult {
        statistic: plus.min(minus) as f64 / 2.0,
        p_value: (2.0 * (1.0 - normal.cdf(z))).min(1.0),
        n: ranks.len(),
        method: WilcoxonMethod::Normal,
    })
}

/// Two-sided Wilcoxon signed-rank test on `a - b`. Zero differences are
/// dropped first; the exact null distribution is used up to
/// [`EXACT_MAX_N`] remaining pairs, the normal approximation beyond.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    let n = a.iter().zip(b).filter(|(x, y)| x != y).count();
    if n <= EXACT_MAX_N {
        wilcoxon_exact(a, b)
    } else {
        wilcoxon_normal(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;
    use proptest::prelude::*;

    /// Walks all 2^n sign patterns of the (mid-)ranks.
    fn enumerate_p(a: &[f64], b: &[f64]) -> f64 {
        let ranks = signed_ranks(a, b).unwrap();
        let (plus, _) = statistic(&ranks);
        let n = ranks.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u64..(1 << n) {
            let s: u64 = (0..n)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| ranks[i].1)
                .sum();
            if s <= plus {
                le += 1;
            }
            if s >= plus {
                ge += 1;
            }
        }
        (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn five_positive_differences() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [0.0; 5];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.0625);
        assert_eq!(r.method, WilcoxonMethod::Exact);
    }

    #[test]
    fn identical_samples_have_no_data() {
        let a = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        assert!(matches!(
            wilcoxon_signed_rank(&a, &a),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn exact_and_normal_agree_at_twenty() {
        let mut rng = SeededRng::new(2024);
        for _ in 0..200 {
            let a: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..20).map(|_| rng.normal() + 0.3).collect();
            let e = wilcoxon_exact(&a, &b).unwrap();
            let n = wilcoxon_normal(&a, &b).unwrap();
            assert!(
                (e.p_value - n.p_value).abs() < 0.02,
                "{} vs {}",
                e.p_value,
                n.p_value
            );
        }
    }

    #[test]
    fn midranks_for_tied_magnitudes() {
        // |d| = 1,1,2,3,3,3 -> ranks 1.5,1.5,3,5,5,5
        let a = [1.0, -1.0, 2.0, 3.0, 3.0, -3.0];
        let r = wilcoxon_exact(&a, &[0.0; 6]).unwrap();
        assert_eq!(r.statistic, 6.5);
        assert_eq!(r.p_value, enumerate_p(&a, &[0.0; 6]));
    }

    #[test]
    fn large_samples_use_normal_path() {
        let a: Vec<f64> = (0..30).map(|i| i as f64 + 1.0).collect();
        let r = wilcoxon_signed_rank(&a, &[0.0; 30]).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Normal);
        assert!(r.p_value < 1e-5);
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(
            pairs in proptest::collection::vec((-5i32..=5, -5i32..=5), 5..=14)
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            prop_assume!(a.iter().zip(&b).filter(|(x, y)| x != y).count() >= 5);
            let r = wilcoxon_exact(&a, &b).unwrap();
            prop_assert!((r.p_value - enumerate_p(&a, &b)).abs() < 1e-12);
            let swapped = wilcoxon_exact(&b, &a).unwrap();
            prop_assert_eq!(r.p_value, swapped.p_value);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
