use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::math::ProbVector;
use crate::scalar::Scalar;

use super::{require_negatives, TargetLabels};

/// Number of negatives kept at selection rate `m` percent:
/// `max(1, floor(m / 100 * (K - |positives|)))`.
///
/// The lower clamp keeps the weight `beta / n` finite when `m * (K - 1)` is
/// below one hundred.
pub fn selection_count(classes: usize, positives: usize, m: f64) -> Result<usize> {
    if !(0.0..=100.0).contains(&m) {
        return Err(Error::invalid_config(format!("m = {m} outside [0, 100]")));
    }
    if positives >= classes {
        return Err(Error::invalid_input(
            "every class is positive, there are no negatives to select",
        ));
    }
    let negatives = classes - positives;
    // The epsilon absorbs products such as 0.29 * 100 landing just below an integer.
    let raw = (m * negatives as f64 / 100.0 + 1e-9).floor() as usize;
    Ok(raw.clamp(1, negatives))
}

/// Indices of the hardest negatives: the `selection_count` negative classes
/// with the highest probability, ordered by descending probability and then
/// ascending class index.
pub fn select_hard_negatives<T: Scalar>(
    p: &ProbVector<T>,
    y: &TargetLabels,
    m: f64,
) -> Result<Vec<usize>> {
    if p.len() != y.classes() {
        return Err(Error::Shape(format!(
            "{} probabilities for a {}-class label set",
            p.len(),
            y.classes()
        )));
    }
    top_negatives(p.as_slice(), y, m)
}

pub(crate) fn top_negatives<T: Scalar>(
    scores: &[T],
    y: &TargetLabels,
    m: f64,
) -> Result<Vec<usize>> {
    require_negatives(y)?;
    let n_sel = selection_count(y.classes(), y.positives().len(), m)?;
    let mut negatives: Vec<usize> = (0..scores.len()).filter(|&k| !y.contains(k)).collect();
    negatives.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    negatives.truncate(n_sel);
    Ok(negatives)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(v: &[f64]) -> ProbVector<f64> {
        ProbVector::new(v.to_vec(), false).unwrap()
    }

    #[test]
    fn ranks_negatives_by_probability() {
        let y = TargetLabels::single(0, 5).unwrap();
        let p = probs(&[0.9, 0.8, 0.1, 0.7, 0.2]);
        assert_eq!(select_hard_negatives(&p, &y, 50.0).unwrap(), vec![1, 3]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let y = TargetLabels::single(0, 5).unwrap();
        let p = probs(&[0.5; 5]);
        assert_eq!(select_hard_negatives(&p, &y, 25.0).unwrap(), vec![1]);
        let y = TargetLabels::single(2, 5).unwrap();
        assert_eq!(select_hard_negatives(&p, &y, 50.0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn full_selection() {
        let y = TargetLabels::single(0, 10).unwrap();
        let p = probs(&[0.1; 10]);
        assert_eq!(
            select_hard_negatives(&p, &y, 100.0).unwrap(),
            (1..10).collect::<Vec<_>>()
        );
    }

    #[test]
    fn count_is_clamped_to_one() {
        assert_eq!(selection_count(5, 1, 0.0).unwrap(), 1);
        assert_eq!(selection_count(5, 1, 10.0).unwrap(), 1);
        assert_eq!(selection_count(5, 1, 25.0).unwrap(), 1);
        assert_eq!(selection_count(5, 1, 50.0).unwrap(), 2);
        assert_eq!(selection_count(101, 1, 29.0).unwrap(), 29);
        assert_eq!(selection_count(11, 1, 30.0).unwrap(), 3);
        assert_eq!(selection_count(10, 3, 100.0).unwrap(), 7);
    }

    #[test]
    fn no_negatives_is_an_error() {
        let y = TargetLabels::new(vec![0, 1], 2).unwrap();
        let p = probs(&[0.5, 0.5]);
        assert!(matches!(
            select_hard_negatives(&p, &y, 25.0),
            Err(Error::InvalidInput(_))
        ));
        assert!(selection_count(4, 1, 101.0).is_err());
    }
}
