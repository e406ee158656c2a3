use serde_json::json;

use crate::error::{Error, Result};
use crate::losses::TargetLabels;
use crate::math::SeededRng;
use crate::matrix::Matrix;

use super::{sphere_point, Dataset, DatasetMeta, Split};

/// Balanced Gaussian classes: class means on a sphere of radius `separation`,
/// unit-variance isotropic noise around each mean.
///
/// Means come from stream 0 of `seed`; every call to [`BlobSource::sample`]
/// names its own stream so train and test splits share means but not noise.
#[derive(Debug, Clone, PartialEq)]
pub struct BlobSource {
    means: Vec<Vec<f64>>,
    separation: f64,
    seed: u64,
}

impl BlobSource {
    pub fn new(classes: usize, dim: usize, separation: f64, seed: u64) -> Result<Self> {
        if classes < 2 || dim < 2 {
            return Err(Error::invalid_config(format!(
                "blobs need classes >= 2 and dim >= 2 (got {classes}, {dim})"
            )));
        }
        if !(separation >= 0.0 && separation.is_finite()) {
            return Err(Error::invalid_config("blob separation must be >= 0"));
        }
        let mut rng = SeededRng::with_stream(seed, 0);
        let means = (0..classes)
            .map(|_| sphere_point(&mut rng, dim, separation))
            .collect();
        Ok(Self {
            means,
            separation,
            seed,
        })
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// `n_per_class` rows per class, grouped by class in ascending order.
    pub fn sample(&self, n_per_class: usize, stream: u64, split: Split) -> Result<Dataset> {
        if n_per_class == 0 {
            return Err(Error::invalid_config("n_per_class must be >= 1"));
        }
        let classes = self.means.len();
        let dim = self.means[0].len();
        let mut rng = SeededRng::with_stream(self.seed, stream);
        let mut data = Vec::with_capacity(classes * n_per_class * dim);
        let mut labels = Vec::with_capacity(classes * n_per_class);
        for (k, mean) in self.means.iter().enumerate() {
            for _ in 0..n_per_class {
                data.extend(mean.iter().map(|&m| m + rng.normal()));
                labels.push(TargetLabels::single(k, classes)?);
            }
        }
        let meta = DatasetMeta {
            generator: "blobs".into(),
            params: json!({
                "classes": classes,
                "dim": dim,
                "n_per_class": n_per_class,
                "separation": self.separation,
                "stream": stream,
            }),
            seed: Some(self.seed),
        };
        Dataset::new(
            Matrix::from_vec(classes * n_per_class, dim, data)?,
            labels,
            classes,
            split,
            meta,
        )
    }
}

/// Balanced single-label Gaussian blobs (stream 1 of `seed`).
pub fn gen_blobs(
    classes: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    BlobSource::new(classes, dim, separation, seed)?.sample(n_per_class, 1, Split::Train)
}
