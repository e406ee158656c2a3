use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::TargetLabels;
use crate::matrix::Matrix;
use crate::model::argmax;
use crate::scalar::Scalar;

/// Fraction of rows whose arg-max logit is the label.
pub fn top1_accuracy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid_input("no rows to evaluate"));
    }
    let hits = logits
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(row) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Indices of the `t` largest scores, best first; ties go to the lower index.
pub fn top_t<T: Scalar>(scores: &[T], t: usize) -> Vec<usize> {
    let mut order = super::rank_descending(scores);
    order.truncate(t);
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedAccuracy {
    pub value: f64,
    /// Classes with no ground-truth occurrence, left out of the mean.
    pub absent_classes: Vec<usize>,
}

/// Mean per-class recall. `predictions[i]` is the predicted class set of row
/// `i` (a single arg-max or a top-t set); class `c` is recalled on row `i`
/// when `c` is both in the truth and in the prediction.
pub fn balanced_accuracy(
    predictions: &[Vec<usize>],
    labels: &[TargetLabels],
    classes: usize,
) -> Result<BalancedAccuracy> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut support = vec![0usize; classes];
    let mut recalled = vec![0usize; classes];
    for (pred, y) in predictions.iter().zip(labels) {
        if y.classes() != classes {
            return Err(Error::Shape(format!(
                "label set over {} classes, expected {classes}",
                y.classes()
            )));
        }
        for &c in y.positives() {
            support[c] += 1;
            if pred.contains(&c) {
                recalled[c] += 1;
            }
        }
    }
    let present: Vec<usize> = (0..classes).filter(|&c| support[c] > 0).collect();
    if present.is_empty() {
        return Err(Error::Undefined(
            "no class occurs in the ground truth".into(),
        ));
    }
    let value = present
        .iter()
        .map(|&c| recalled[c] as f64 / support[c] as f64)
        .sum::<f64>()
        / present.len() as f64;
    Ok(BalancedAccuracy {
        value,
        absent_classes: (0..classes).filter(|&c| support[c] == 0).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::SeededRng;

    fn singles(ys: &[usize], k: usize) -> Vec<TargetLabels> {
        ys.iter()
            .map(|&y| TargetLabels::single(y, k).unwrap())
            .collect()
    }

    #[test]
    fn one_hot_logits_are_perfect() {
        let ys = [0, 2, 1, 2];
        let rows: Vec<Vec<f64>> = ys
            .iter()
            .map(|&y| (0..3).map(|k| if k == y { 1.0 } else { 0.0 }).collect())
            .collect();
        assert_eq!(
            top1_accuracy(&Matrix::from_rows(&rows).unwrap(), &ys).unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_logits_predict_class_zero() {
        let ys = [0, 1, 0, 2, 0];
        let acc = top1_accuracy(&Matrix::<f64>::zeros(5, 3), &ys).unwrap();
        assert_eq!(acc, 0.6);
    }

    #[test]
    fn random_guessing_is_near_chance() {
        let mut rng = SeededRng::new(10);
        let n = 10_000;
        let ys: Vec<usize> = (0..n).map(|_| rng.below(10)).collect();
        let data: Vec<f64> = (0..n * 10).map(|_| rng.normal()).collect();
        let acc = top1_accuracy(&Matrix::from_vec(n, 10, data).unwrap(), &ys).unwrap();
        // 4 sigma of Binomial(10000, 0.1) / 10000 is 0.012
        assert!((acc - 0.1).abs() < 0.012, "{acc}");
    }

    #[test]
    fn balanced_accuracy_fixtures() {
        let ys = singles(&[0, 0, 1, 1, 1], 2);
        let perfect: Vec<Vec<usize>> = [0, 0, 1, 1, 1].iter().map(|&c| vec![c]).collect();
        assert_eq!(balanced_accuracy(&perfect, &ys, 2).unwrap().value, 1.0);

        // recall 1 on class 0, recall 0 on class 1
        let all_zero = vec![vec![0]; 5];
        assert_eq!(balanced_accuracy(&all_zero, &ys, 2).unwrap().value, 0.5);

        // 9:1 data, always-majority predictor
        let ys = singles(&[0, 0, 0, 0, 0, 0, 0, 0, 0, 1], 2);
        let majority = vec![vec![0]; 10];
        let plain = majority
            .iter()
            .zip(&ys)
            .filter(|(p, y)| y.contains(p[0]))
            .count() as f64
            / 10.0;
        assert_eq!(plain, 0.9);
        assert_eq!(balanced_accuracy(&majority, &ys, 2).unwrap().value, 0.5);
    }

    #[test]
    fn absent_classes_are_reported() {
        let ys = singles(&[0, 2], 4);
        let r = balanced_accuracy(&[vec![0], vec![1]], &ys, 4).unwrap();
        assert_eq!(r.value, 0.5);
        assert_eq!(r.absent_classes, vec![1, 3]);
        assert!(matches!(
            balanced_accuracy(&[], &[], 3),
            Err(Error::Undefined(_))
        ));
    }
}
