use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::TargetLabels;
use crate::math::SeededRng;
use crate::matrix::Matrix;

use super::{sphere_point, Dataset, DatasetMeta, Split};

/// Sparse, imbalanced multi-label task.
///
/// Class `k` is present with probability `pi_k = c (k + 1)^(-a)`, where
/// `a = ln(imbalance_ratio) / ln(K)` makes `pi_0 / pi_{K-1}` equal the ratio
/// and `c` makes `Σ pi_k = avg_positives`. Rows that draw no label get one
/// class sampled proportionally to `pi`. Features are the sum of the
/// prototypes of the row's labels (norm `prototype_scale`) plus `N(0, noise^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseMultilabelParams {
    pub classes: usize,
    pub dim: usize,
    pub avg_positives: f64,
    pub imbalance_ratio: f64,
    #[serde(default = "default_prototype_scale")]
    pub prototype_scale: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

fn default_prototype_scale() -> f64 {
    3.0
}

fn default_noise() -> f64 {
    1.0
}

/// Per-class prevalence, non-increasing in the class index.
pub fn prevalences(classes: usize, avg_positives: f64, imbalance_ratio: f64) -> Result<Vec<f64>> {
    if classes < 2 {
        return Err(Error::invalid_config(
            "multi-label data needs at least 2 classes",
        ));
    }
    if !(imbalance_ratio >= 1.0 && imbalance_ratio.is_finite()) {
        return Err(Error::invalid_config("imbalance_ratio must be >= 1"));
    }
    if !(avg_positives >= 1.0 && avg_positives < classes as f64) {
        return Err(Error::invalid_config(format!(
            "avg_positives = {avg_positives} must lie in [1, {classes})"
        )));
    }
    let exponent = imbalance_ratio.ln() / (classes as f64).ln();
    let raw: Vec<f64> = (0..classes)
        .map(|k| ((k + 1) as f64).powf(-exponent))
        .collect();
    let scale = avg_positives / raw.iter().sum::<f64>();
    if raw[0] * scale > 1.0 {
        return Err(Error::invalid_config(format!(
            "infeasible prevalence: {avg_positives} average labels at ratio {imbalance_ratio} \
             needs a class present with probability {:.3}",
            raw[0] * scale
        )));
    }
    Ok(raw.into_iter().map(|r| r * scale).collect())
}

impl SparseMultilabelParams {
    /// Class prototypes come from stream 0 of `seed`; rows from `stream`.
    pub fn sample(&self, samples: usize, seed: u64, stream: u64, split: Split) -> Result<Dataset> {
        if samples == 0 {
            return Err(Error::invalid_config(
                "multi-label data needs at least one row",
            ));
        }
        if self.dim < 1 {
            return Err(Error::invalid_config("multi-label data needs dim >= 1"));
        }
        let pi = prevalences(self.classes, self.avg_positives, self.imbalance_ratio)?;
        let total: f64 = pi.iter().sum();
        let mut proto_rng = SeededRng::with_stream(seed, 0);
        let prototypes: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| sphere_point(&mut proto_rng, self.dim, self.prototype_scale))
            .collect();

        let mut rng = SeededRng::with_stream(seed, stream);
        let mut data = Vec::with_capacity(samples * self.dim);
        let mut labels = Vec::with_capacity(samples);
        for _ in 0..samples {
            let mut positives: Vec<usize> = (0..self.classes)
                .filter(|&k| rng.uniform() < pi[k])
                .collect();
            if positives.is_empty() {
                let mut u = rng.uniform() * total;
                let mut pick = self.classes - 1;
                for (k, &p) in pi.iter().enumerate() {
                    if u < p {
                        pick = k;
                        break;
                    }
                    u -= p;
                }
                positives.push(pick);
            }
            let mut x = vec![0.0; self.dim];
            for &k in &positives {
                for (a, &p) in x.iter_mut().zip(&prototypes[k]) {
                    *a += p;
                }
            }
            data.extend(x.into_iter().map(|v| v + self.noise * rng.normal()));
            labels.push(TargetLabels::new(positives, self.classes)?);
        }
        let meta = DatasetMeta {
            generator: "sparse-multilabel".into(),
            params: serde_json::json!({ "params": self, "samples": samples, "stream": stream }),
            seed: Some(seed),
        };
        Dataset::new(
            Matrix::from_vec(samples, self.dim, data)?,
            labels,
            self.classes,
            split,
            meta,
        )
    }
}

/// `samples` rows of the sparse multi-label task (feature dim 32), stream 1.
pub fn gen_sparse_multilabel(
    classes: usize,
    samples: usize,
    avg_positives: f64,
    imbalance_ratio: f64,
    seed: u64,
) -> Result<Dataset> {
    SparseMultilabelParams {
        classes,
        dim: 32,
        avg_positives,
        imbalance_ratio,
        prototype_scale: default_prototype_scale(),
        noise: default_noise(),
    }
    .sample(samples, seed, 1, Split::Train)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_positive_count_matches_target() {
        let d = gen_sparse_multilabel(200, 10_000, 3.0, 50.0, 4).unwrap();
        let mean = d
            .labels()
            .iter()
            .map(|l| l.positives().len())
            .sum::<usize>() as f64
            / d.len() as f64;
        assert!((mean - 3.0).abs() <= 0.3, "mean positives {mean}");
        assert!(d.labels().iter().all(|l| !l.positives().is_empty()));
    }

    #[test]
    fn prevalence_is_monotone_with_requested_ratio() {
        let pi = prevalences(200, 3.0, 733.0).unwrap();
        assert!(pi.windows(2).all(|w| w[0] >= w[1]));
        assert!((pi[0] / pi[199] - 733.0).abs() < 1e-6);
        assert!((pi.iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn unit_ratio_is_flat() {
        let pi = prevalences(50, 2.0, 1.0).unwrap();
        assert!(pi.iter().all(|&p| (p - 0.04).abs() < 1e-15));
        let d = gen_sparse_multilabel(10, 20_000, 2.0, 1.0, 3).unwrap();
        let h = d.class_histogram();
        let expected = 20_000.0 * 0.2;
        // 5 sigma of a Binomial(20000, 0.2) plus the empty-row top-up
        assert!(
            h.iter()
                .all(|&c| (c as f64 - expected).abs() < 5.0 * (expected * 0.8).sqrt() + 100.0),
            "{h:?}"
        );
    }

    #[test]
    fn infeasible_configuration_is_rejected() {
        assert!(matches!(
            prevalences(10, 5.0, 1000.0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(prevalences(10, 0.5, 2.0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = gen_sparse_multilabel(20, 100, 2.0, 5.0, 1).unwrap();
        assert_eq!(a, gen_sparse_multilabel(20, 100, 2.0, 5.0, 1).unwrap());
    }
}
