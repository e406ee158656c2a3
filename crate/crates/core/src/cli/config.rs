//! Run configuration files (TOML).
//!
//! ```toml
//! [data]
//! generator = "blobs"        # blobs | retrieval | sparse-multilabel | file
//! classes = 100
//! dim = 32
//! train_per_class = 20
//! test_per_class = 20
//! separation = 3.0
//! # seed = 7                 # data seed; the run seed when absent
//!
//! [model]
//! hidden = [64]
//!
//! [loss]
//! variant = "ss-lr"
//!
//! [optimizer]
//! kind = "sgd"
//!
//! [training]
//! epochs = 10
//! batch_size = 64
//! seed = 1
//!
//! [output]
//! dir = "runs"
//! run_name = "blobs100-ss-lr"
//! ```
//!
//! Unknown keys are errors everywhere. `[eval]` and `[output]` may be left
//! out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    BlobSource, Dataset, DelimitedSchema, RetrievalParams, SparseMultilabelParams, Split,
};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::metrics::{DistanceMetric, Task};
use crate::model::OptimizerConfig;

fn yes() -> bool {
    true
}

fn default_view_scale() -> f64 {
    2.0
}

fn default_ml_dim() -> usize {
    32
}

fn default_prototype_scale() -> f64 {
    3.0
}

fn default_noise() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    Blobs {
        classes: usize,
        dim: usize,
        train_per_class: usize,
        test_per_class: usize,
        separation: f64,
        seed: Option<u64>,
        #[serde(default = "yes")]
        standardize: bool,
    },
    Retrieval {
        train_classes: usize,
        test_classes: usize,
        dim: usize,
        n_per_class: usize,
        separation: f64,
        #[serde(default = "default_view_scale")]
        view_scale: f64,
        seed: Option<u64>,
        #[serde(default = "yes")]
        standardize: bool,
    },
    SparseMultilabel {
        classes: usize,
        #[serde(default = "default_ml_dim")]
        dim: usize,
        avg_positives: f64,
        imbalance_ratio: f64,
        train_samples: usize,
        test_samples: usize,
        #[serde(default = "default_prototype_scale")]
        prototype_scale: f64,
        #[serde(default = "default_noise")]
        noise: f64,
        seed: Option<u64>,
        #[serde(default = "yes")]
        standardize: bool,
    },
    File {
        train: PathBuf,
        test: PathBuf,
        classes: Option<usize>,
        /// `classify` or `multilabel`; inferred from the labels when absent.
        task: Option<Task>,
        #[serde(default = "yes")]
        standardize: bool,
    },
}

/// Data ready for training and evaluation.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub eval: EvalData,
    pub task: Task,
}

#[derive(Debug, Clone)]
pub enum EvalData {
    Labeled(Dataset),
    Retrieval { query: Dataset, gallery: Dataset },
}

impl DataConfig {
    pub fn standardize(&self) -> bool {
        match self {
            Self::Blobs { standardize, .. }
            | Self::Retrieval { standardize, .. }
            | Self::SparseMultilabel { standardize, .. }
            | Self::File { standardize, .. } => *standardize,
        }
    }

    fn data_seed(&self, run_seed: u64) -> u64 {
        match self {
            Self::Blobs { seed, .. }
            | Self::Retrieval { seed, .. }
            | Self::SparseMultilabel { seed, .. } => seed.unwrap_or(run_seed),
            Self::File { .. } => run_seed,
        }
    }

    /// Builds the train and evaluation splits (not yet standardized).
    pub fn prepare(&self, run_seed: u64, base_dir: &Path) -> Result<PreparedData> {
        let seed = self.data_seed(run_seed);
        match self {
            Self::Blobs {
                classes,
                dim,
                train_per_class,
                test_per_class,
                separation,
                ..
            } => {
                let src = BlobSource::new(*classes, *dim, *separation, seed)?;
                Ok(PreparedData {
                    train: src.sample(*train_per_class, 1, Split::Train)?,
                    eval: EvalData::Labeled(src.sample(*test_per_class, 2, Split::Test)?),
                    task: Task::Classify,
                })
            }
            Self::Retrieval {
                train_classes,
                test_classes,
                dim,
                n_per_class,
                separation,
                view_scale,
                ..
            } => {
                let split = RetrievalParams {
                    train_classes: *train_classes,
                    test_classes: *test_classes,
                    dim: *dim,
                    n_per_class: *n_per_class,
                    separation: *separation,
                    view_scale: *view_scale,
                }
                .generate(seed)?;
                Ok(PreparedData {
                    train: split.train,
                    eval: EvalData::Retrieval {
                        query: split.query,
                        gallery: split.gallery,
                    },
                    task: Task::Retrieve,
                })
            }
            Self::SparseMultilabel {
                classes,
                dim,
                avg_positives,
                imbalance_ratio,
                train_samples,
                test_samples,
                prototype_scale,
                noise,
                ..
            } => {
                let params = SparseMultilabelParams {
                    classes: *classes,
                    dim: *dim,
                    avg_positives: *avg_positives,
                    imbalance_ratio: *imbalance_ratio,
                    prototype_scale: *prototype_scale,
                    noise: *noise,
                };
                Ok(PreparedData {
                    train: params.sample(*train_samples, seed, 1, Split::Train)?,
                    eval: EvalData::Labeled(params.sample(*test_samples, seed, 2, Split::Test)?),
                    task: Task::Multilabel,
                })
            }
            Self::File {
                train,
                test,
                classes,
                task,
                ..
            } => {
                let schema = DelimitedSchema {
                    classes: *classes,
                    ..DelimitedSchema::default()
                };
                let mut train_set = crate::data::load_delimited(&base_dir.join(train), &schema)?;
                train_set.split = Split::Train;
                let schema = schema.with_classes(train_set.classes());
                let test_set = crate::data::load_delimited(&base_dir.join(test), &schema)?;
                let inferred = if train_set.is_single_label() && test_set.is_single_label() {
                    Task::Classify
                } else {
                    Task::Multilabel
                };
                let task = task.unwrap_or(inferred);
                match task {
                    Task::Retrieve => {
                        return Err(Error::invalid_config(
                            "data.task = \"retrieve\" is not available for file data",
                        ))
                    }
                    Task::Classify if inferred == Task::Multilabel => {
                        return Err(Error::invalid_config(
                            "data.task = \"classify\" but the files hold multi-label rows",
                        ))
                    }
                    _ => {}
                }
                Ok(PreparedData {
                    train: train_set,
                    eval: EvalData::Labeled(test_set),
                    task,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths; empty for a linear model.
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub precision: Precision,
}

fn default_batch_size() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_t() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub distance: DistanceMetric,
    /// Prediction set size for the multi-label accuracies.
    #[serde(default = "default_t")]
    pub top_t: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            distance: DistanceMetric::default(),
            top_t: default_t(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_run_name() -> String {
    "run".into()
}

fn default_stride() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_run_name")]
    pub run_name: String,
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            run_name: default_run_name(),
            trace_stride: default_stride(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Every default written out, so the file reproduces the run as is.
    pub fn resolved(&self) -> Self {
        Self {
            optimizer: self.optimizer.resolved(),
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optimizer.validate()?;
        if self.training.batch_size == 0 {
            return Err(Error::invalid_config("training.batch_size must be >= 1"));
        }
        if self.output.trace_stride == 0 {
            return Err(Error::invalid_config("output.trace_stride must be >= 1"));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::invalid_config("model.hidden widths must be >= 1"));
        }
        if self.eval.top_t == 0 {
            return Err(Error::invalid_config("eval.top_t must be >= 1"));
        }
        if self.output.run_name.is_empty() || self.output.run_name.contains(['/', '\\']) {
            return Err(Error::invalid_config(
                "output.run_name must be a non-empty file name",
            ));
        }
        Ok(())
    }

    /// Sections that differ between two configs, ignoring `[loss]` and
    /// `[output]`.
    pub fn confounds(&self, other: &Self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.data != other.data {
            out.push("data");
        }
        if self.model != other.model {
            out.push("model");
        }
        if self.optimizer.resolved() != other.optimizer.resolved() {
            out.push("optimizer");
        }
        if self.training != other.training {
            out.push("training");
        }
        if self.eval != other.eval {
            out.push("eval");
        }
        out
    }
}
