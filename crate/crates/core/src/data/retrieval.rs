use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::losses::TargetLabels;
use crate::math::SeededRng;
use crate::matrix::Matrix;

use super::{sphere_point, Dataset, DatasetMeta, Split};

/// Zero-shot identity matching task.
///
/// Identity `c` has a mean on the sphere of radius `separation` inside the
/// first `ceil(dim / 2)` coordinates (the identity subspace). Each identity
/// also has two view offsets drawn from `N(0, view_scale^2)` in the remaining
/// coordinates; sample `i` of an identity uses view `i % 2`. Every sample adds
/// unit Gaussian noise to all coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalParams {
    pub train_classes: usize,
    pub test_classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    pub separation: f64,
    #[serde(default = "default_view_scale")]
    pub view_scale: f64,
}

fn default_view_scale() -> f64 {
    2.0
}

/// Training identities and a disjoint set of test identities split into one
/// query per identity plus a gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalSplit {
    /// Labelled `0..train_classes`, with `classes() == train_classes`.
    pub train: Dataset,
    /// Labelled with global identity ids from `test_classes`.
    pub gallery: Dataset,
    pub query: Dataset,
    pub train_classes: BTreeSet<usize>,
    pub test_classes: BTreeSet<usize>,
}

impl RetrievalParams {
    pub fn validate(&self) -> Result<()> {
        if self.train_classes < 2 || self.test_classes < 2 {
            return Err(Error::invalid_config(
                "retrieval needs at least 2 train and 2 test identities",
            ));
        }
        if self.n_per_class < 2 {
            return Err(Error::invalid_config(
                "retrieval needs n_per_class >= 2 to form a query and a gallery",
            ));
        }
        if self.dim < 2 {
            return Err(Error::invalid_config("retrieval needs dim >= 2"));
        }
        if !(self.separation >= 0.0 && self.view_scale >= 0.0) {
            return Err(Error::invalid_config(
                "separation and view_scale must be >= 0",
            ));
        }
        Ok(())
    }

    pub fn generate(&self, seed: u64) -> Result<RetrievalSplit> {
        self.validate()?;
        let total = self.train_classes + self.test_classes;
        let signal = self.dim.div_ceil(2);
        let mut rng = SeededRng::with_stream(seed, 0);
        let mut identities = Vec::with_capacity(total);
        for _ in 0..total {
            let mut mean = sphere_point(&mut rng, signal, self.separation);
            mean.resize(self.dim, 0.0);
            let views: Vec<Vec<f64>> = (0..2)
                .map(|_| {
                    (0..self.dim)
                        .map(|j| {
                            if j < signal {
                                0.0
                            } else {
                                self.view_scale * rng.normal()
                            }
                        })
                        .collect()
                })
                .collect();
            identities.push((mean, views));
        }

        let mut noise = SeededRng::with_stream(seed, 1);
        let mut draw = |id: usize, i: usize| -> Vec<f64> {
            let (mean, views) = &identities[id];
            mean.iter()
                .zip(&views[i % 2])
                .map(|(m, v)| m + v + noise.normal())
                .collect()
        };

        let mut train_x = Vec::new();
        let mut train_y = Vec::new();
        for id in 0..self.train_classes {
            for i in 0..self.n_per_class {
                train_x.extend(draw(id, i));
                train_y.push(TargetLabels::single(id, self.train_classes)?);
            }
        }
        let (mut gallery_x, mut gallery_y) = (Vec::new(), Vec::new());
        let (mut query_x, mut query_y) = (Vec::new(), Vec::new());
        for id in self.train_classes..total {
            for i in 0..self.n_per_class {
                let x = draw(id, i);
                let y = TargetLabels::single(id, total)?;
                if i == 0 {
                    query_x.extend(x);
                    query_y.push(y);
                } else {
                    gallery_x.extend(x);
                    gallery_y.push(y);
                }
            }
        }

        let meta = DatasetMeta {
            generator: "retrieval".into(),
            params: serde_json::to_value(self)?,
            seed: Some(seed),
        };
        let build = |x: Vec<f64>, y: Vec<TargetLabels>, classes: usize, split| {
            let rows = y.len();
            Dataset::new(
                Matrix::from_vec(rows, self.dim, x)?,
                y,
                classes,
                split,
                meta.clone(),
            )
        };
        let mut query = build(query_x, query_y, total, Split::Test)?;
        query.meta.params = json!({ "role": "query", "params": self });
        let mut gallery = build(gallery_x, gallery_y, total, Split::Test)?;
        gallery.meta.params = json!({ "role": "gallery", "params": self });
        Ok(RetrievalSplit {
            train: build(train_x, train_y, self.train_classes, Split::Train)?,
            gallery,
            query,
            train_classes: (0..self.train_classes).collect(),
            test_classes: (self.train_classes..total).collect(),
        })
    }
}

pub fn gen_retrieval(
    train_classes: usize,
    test_classes: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
    seed: u64,
) -> Result<RetrievalSplit> {
    RetrievalParams {
        train_classes,
        test_classes,
        dim,
        n_per_class,
        separation,
        view_scale: default_view_scale(),
    }
    .generate(seed)
}
