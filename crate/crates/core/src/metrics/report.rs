use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Retrieve,
    Multilabel,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classify" => Ok(Self::Classify),
            "retrieve" => Ok(Self::Retrieve),
            "multilabel" => Ok(Self::Multilabel),
            other => Err(Error::invalid_config(format!(
                "unknown task `{other}` (expected classify, retrieve or multilabel)"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Classify => "classify",
            Self::Retrieve => "retrieve",
            Self::Multilabel => "multilabel",
        })
    }
}

/// Evaluation results as fractions in `[0, 1]`. Metrics that do not apply to
/// the task are `null` in the serialized report, never 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub task: Task,
    pub samples: usize,
    pub top1: Option<f64>,
    pub balanced_per_class_acc: Option<f64>,
    pub per_image_acc_top5: Option<f64>,
    pub per_class_acc_top5: Option<f64>,
    pub per_image_map: Option<f64>,
    pub per_class_map: Option<f64>,
    pub rank1: Option<f64>,
    pub map_retrieval: Option<f64>,
    /// Classes, images or queries left out because a metric was undefined
    /// for them.
    pub excluded: usize,
}

impl EvalReport {
    pub fn empty(task: Task, samples: usize) -> Self {
        Self {
            task,
            samples,
            top1: None,
            balanced_per_class_acc: None,
            per_image_acc_top5: None,
            per_class_acc_top5: None,
            per_image_map: None,
            per_class_map: None,
            rank1: None,
            map_retrieval: None,
            excluded: 0,
        }
    }

    /// `(key, value)` for every field that has a value.
    pub fn populated(&self) -> Vec<(&'static str, f64)> {
        [
            ("top1", self.top1),
            ("balanced_per_class_acc", self.balanced_per_class_acc),
            ("per_image_acc_top5", self.per_image_acc_top5),
            ("per_class_acc_top5", self.per_class_acc_top5),
            ("per_image_map", self.per_image_map),
            ("per_class_map", self.per_class_map),
            ("rank1", self.rank1),
            ("map_retrieval", self.map_retrieval),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.populated()
            .into_iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.populated() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid_input(format!("{k} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}
