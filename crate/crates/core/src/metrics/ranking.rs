use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::TargetLabels;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::classify::{balanced_accuracy, top_t};

/// Indices sorted by descending score, ties to the lower index.
pub fn rank_descending<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Mean of precision@i over the relevant positions `i` of a ranked list.
pub fn average_precision(ranked_relevance: &[bool]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0.0;
    for (i, &rel) in ranked_relevance.iter().enumerate() {
        if rel {
            hits += 1;
            total += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::Undefined("ranking has no relevant item".into()));
    }
    Ok(total / hits as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilabelReport {
    pub t: usize,
    /// Mean over images of `|top-t ∩ truth| / min(t, |truth|)`.
    pub per_image_acc: f64,
    /// Mean over classes of the recall of the top-t sets.
    pub per_class_acc: f64,
    /// Mean AP of each image's class ranking against its label set.
    pub per_image_map: f64,
    /// Mean AP of each class's image ranking against its positive images.
    pub per_class_map: f64,
    /// Classes without a positive image, left out of the per-class means.
    pub absent_classes: usize,
}

pub fn multilabel_report<T: Scalar>(
    scores: &Matrix<T>,
    labels: &[TargetLabels],
    t: usize,
) -> Result<MultilabelReport> {
    let classes = scores.cols();
    if scores.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} score rows for {} label sets",
            scores.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid_input("no rows to evaluate"));
    }
    if t == 0 {
        return Err(Error::invalid_input("t must be >= 1"));
    }

    let mut top_sets = Vec::with_capacity(labels.len());
    let (mut img_acc, mut img_ap) = (0.0, 0.0);
    for (row, y) in scores.iter_rows().zip(labels) {
        let ranking = rank_descending(row);
        let top = top_t(row, t);
        let hits = top.iter().filter(|&&c| y.contains(c)).count();
        img_acc += hits as f64 / t.min(y.positives().len()) as f64;
        let rel: Vec<bool> = ranking.iter().map(|&c| y.contains(c)).collect();
        img_ap += average_precision(&rel)?;
        top_sets.push(top);
    }
    let n = labels.len() as f64;
    let balanced = balanced_accuracy(&top_sets, labels, classes)?;

    let mut column = vec![T::zero(); labels.len()];
    let (mut cls_ap, mut counted) = (0.0, 0usize);
    for c in 0..classes {
        for (v, row) in column.iter_mut().zip(scores.iter_rows()) {
            *v = row[c];
        }
        let rel: Vec<bool> = rank_descending(&column)
            .into_iter()
            .map(|i| labels[i].contains(c))
            .collect();
        if let Ok(ap) = average_precision(&rel) {
            cls_ap += ap;
            counted += 1;
        }
    }

    Ok(MultilabelReport {
        t,
        per_image_acc: img_acc / n,
        per_class_acc: balanced.value,
        per_image_map: img_ap / n,
        per_class_map: cls_ap / counted as f64,
        absent_classes: balanced.absent_classes.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Precision at each hit from scratch, by counting the prefix.
    fn ap_oracle(rel: &[bool]) -> Option<f64> {
        let hits: Vec<usize> = (0..rel.len()).filter(|&i| rel[i]).collect();
        if hits.is_empty() {
            return None;
        }
        let sum: f64 = hits
            .iter()
            .map(|&i| rel[..=i].iter().filter(|&&r| r).count() as f64 / (i + 1) as f64)
            .sum();
        Some(sum / hits.len() as f64)
    }

    #[test]
    fn ap_matches_exhaustive_oracle() {
        for len in 1..=8usize {
            for mask in 0u32..(1 << len) {
                let rel: Vec<bool> = (0..len).map(|i| mask >> i & 1 == 1).collect();
                match (average_precision(&rel), ap_oracle(&rel)) {
                    (Ok(a), Some(b)) => assert!((a - b).abs() < 1e-15, "{rel:?}"),
                    (Err(Error::Undefined(_)), None) => {}
                    other => panic!("{rel:?}: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn ap_fixtures() {
        assert!((average_precision(&[true, false, true]).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[true; 4]).unwrap(), 1.0);
        let mut bottom = vec![false; 9];
        bottom.push(true);
        assert!((average_precision(&bottom).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ranking_ties_prefer_lower_index() {
        assert_eq!(rank_descending(&[1.0, 3.0, 3.0, 0.0]), vec![1, 2, 0, 3]);
    }

    fn sets(v: &[&[usize]], k: usize) -> Vec<TargetLabels> {
        v.iter()
            .map(|s| TargetLabels::new(s.to_vec(), k).unwrap())
            .collect()
    }

    #[test]
    fn indicator_scores_are_perfect() {
        let labels = sets(&[&[0, 3], &[1], &[2, 3, 4], &[0]], 6);
        let rows: Vec<Vec<f64>> = labels
            .iter()
            .map(|y| {
                (0..6)
                    .map(|c| if y.contains(c) { 1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let r = multilabel_report(&Matrix::from_rows(&rows).unwrap(), &labels, 5).unwrap();
        assert_eq!(
            (
                r.per_image_acc,
                r.per_class_acc,
                r.per_image_map,
                r.per_class_map
            ),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(r.absent_classes, 1);
    }

    #[test]
    fn single_relevant_at_rank_two() {
        let labels = sets(&[&[2]], 5);
        let scores = Matrix::from_rows(&[vec![0.1, 0.9, 0.5, 0.0, 0.2]]).unwrap();
        let r = multilabel_report(&scores, &labels, 5).unwrap();
        assert_eq!(r.per_image_map, 0.5);
    }

    #[test]
    fn three_image_fixture() {
        let labels = sets(&[&[0, 2], &[1], &[0, 1, 3]], 4);
        let rows = vec![
            vec![0.9, 0.1, 0.3, 0.5],
            vec![0.2, 0.4, 0.8, 0.1],
            vec![0.6, 0.7, 0.0, 0.2],
        ];
        let scores = Matrix::from_rows(&rows).unwrap();
        let r = multilabel_report(&scores, &labels, 2).unwrap();

        // per image, class rankings: [0,3,2,1], [2,1,0,3], [1,0,3,2]
        let img = [
            ap_oracle(&[true, false, true, false]).unwrap(),
            ap_oracle(&[false, true, false, false]).unwrap(),
            ap_oracle(&[true, true, true, false]).unwrap(),
        ];
        assert!((r.per_image_map - img.iter().sum::<f64>() / 3.0).abs() < 1e-15);
        // per class, image rankings: c0 [0,2,1], c1 [2,1,0], c2 [1,0,2], c3 [0,2,1]
        let cls = [
            ap_oracle(&[true, true, false]).unwrap(),
            ap_oracle(&[true, true, false]).unwrap(),
            ap_oracle(&[false, true, false]).unwrap(),
            ap_oracle(&[false, true, false]).unwrap(),
        ];
        assert!((r.per_class_map - cls.iter().sum::<f64>() / 4.0).abs() < 1e-15);
        // top-2 sets: {0,3}, {2,1}, {1,0}
        assert!((r.per_image_acc - (0.5 + 1.0 + 1.0) / 3.0).abs() < 1e-15);
        // recalls: c0 2/2, c1 2/2, c2 0/1, c3 0/1
        assert_eq!(r.per_class_acc, 0.5);
    }

    #[test]
    fn row_order_does_not_matter() {
        let labels = sets(&[&[0, 2], &[1], &[0, 1, 3]], 4);
        let rows = vec![
            vec![0.9, 0.1, 0.3, 0.5],
            vec![0.2, 0.4, 0.8, 0.1],
            vec![0.6, 0.7, 0.05, 0.2],
        ];
        let a = multilabel_report(&Matrix::from_rows(&rows).unwrap(), &labels, 2).unwrap();
        let perm = [2, 0, 1];
        let rows2: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let labels2: Vec<TargetLabels> = perm.iter().map(|&i| labels[i].clone()).collect();
        let b = multilabel_report(&Matrix::from_rows(&rows2).unwrap(), &labels2, 2).unwrap();
        assert!((a.per_image_acc - b.per_image_acc).abs() < 1e-15);
        assert!((a.per_image_map - b.per_image_map).abs() < 1e-15);
        assert_eq!(a.per_class_acc, b.per_class_acc);
        assert_eq!(a.per_class_map, b.per_class_map);
    }
}
