//! Datasets, synthetic generators and the delimited-text format.

mod blobs;
mod delimited;
mod multilabel;
mod retrieval;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::TargetLabels;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use blobs::{gen_blobs, BlobSource};
pub use delimited::{load_delimited, save_delimited, DelimitedSchema};
pub use multilabel::{gen_sparse_multilabel, prevalences, SparseMultilabelParams};
pub use retrieval::{gen_retrieval, RetrievalParams, RetrievalSplit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Feature rows with one label set each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix<f64>,
    labels: Vec<TargetLabels>,
    classes: usize,
    pub split: Split,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(
        features: Matrix<f64>,
        labels: Vec<TargetLabels>,
        classes: usize,
        split: Split,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::invalid_input("dataset has no rows"));
        }
        if labels.len() != features.rows() {
            return Err(Error::Shape(format!(
                "{} label sets for {} feature rows",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(i) = labels.iter().position(|l| l.classes() != classes) {
            return Err(Error::Schema(format!(
                "row {i} is labelled for {} classes, dataset has {classes}",
                labels[i].classes()
            )));
        }
        if !features.is_finite() {
            return Err(Error::invalid_input(
                "dataset features contain non-finite values",
            ));
        }
        Ok(Self {
            features,
            labels,
            classes,
            split,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &Matrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[TargetLabels] {
        &self.labels
    }

    pub fn is_single_label(&self) -> bool {
        self.labels.iter().all(TargetLabels::is_single)
    }

    /// One label per row, when every row has exactly one.
    pub fn single_labels(&self) -> Option<Vec<usize>> {
        self.labels.iter().map(TargetLabels::single_label).collect()
    }

    /// Number of rows carrying each class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for l in &self.labels {
            for &k in l.positives() {
                counts[k] += 1;
            }
        }
        counts
    }

    /// Rows `indices` as a feature batch in the model's scalar type.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> (Matrix<T>, Vec<&TargetLabels>) {
        let x = self.features.select_rows(indices).cast();
        let y = indices.iter().map(|&i| &self.labels[i]).collect();
        (x, y)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i].clone()).collect(),
            self.classes,
            self.split,
            self.meta.clone(),
        )
    }
}

/// Per-dimension affine map to zero mean and unit variance, fitted on one
/// split and applied to any other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics of `data`. Constant dimensions keep scale 1.
    pub fn fit(data: &Dataset) -> Self {
        let (n, d) = (data.len() as f64, data.dim());
        let mut mean = vec![0.0; d];
        for row in data.features.iter_rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in data.features.iter_rows() {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, data: &mut Dataset) -> Result<()> {
        if data.dim() != self.mean.len() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} dims, dataset has {}",
                self.mean.len(),
                data.dim()
            )));
        }
        let rows = data.features.rows();
        for i in 0..rows {
            for ((v, &m), &s) in data
                .features
                .row_mut(i)
                .iter_mut()
                .zip(&self.mean)
                .zip(&self.std)
            {
                *v = (*v - m) / s;
            }
        }
        Ok(())
    }
}

/// Point on the sphere of radius `radius` in `dim` dimensions, from a
/// normalised Gaussian draw.
pub(crate) fn sphere_point(rng: &mut crate::math::SeededRng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| radius * x / norm).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_rows() {
        let f = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let l = vec![TargetLabels::single(0, 3).unwrap()];
        assert!(Dataset::new(f.clone(), l, 2, Split::Train, DatasetMeta::default()).is_err());
        let bad = Matrix::from_rows(&[vec![0.0, f64::NAN]]).unwrap();
        let l = vec![TargetLabels::single(0, 2).unwrap()];
        assert!(Dataset::new(bad, l.clone(), 2, Split::Train, DatasetMeta::default()).is_err());
        assert!(Dataset::new(f, l, 2, Split::Train, DatasetMeta::default()).is_ok());
    }

    #[test]
    fn standardization_is_idempotent() {
        let mut d = gen_blobs(4, 5, 30, 3.0, 9).unwrap();
        let s = Standardizer::fit(&d);
        s.apply(&mut d).unwrap();
        let again = Standardizer::fit(&d);
        for (&m, &sd) in again.mean.iter().zip(&again.std) {
            assert!(m.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-12);
        }
        let before = d.clone();
        again.apply(&mut d).unwrap();
        for (a, b) in d
            .features()
            .as_slice()
            .iter()
            .zip(before.features().as_slice())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
