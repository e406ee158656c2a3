//! Classification objectives with analytic gradients w.r.t. the logits.
//!
//! Every loss returns a [`LossOutput`] holding the value, the gradient and the
//! positive/negative decomposition used by the training diagnostics.
//!
//! Multi-label targets are accepted by the logistic family: the positive term
//! runs over the whole label set, the negatives are its complement, and the
//! weight denominators use `K - |positives|`. With one positive this is the
//! single-label formulation.

mod gradcheck;
mod logistic;
mod selection;
mod softmax;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Logits;
use crate::scalar::Scalar;

pub use gradcheck::{grad_check, gradient_error, GradCheckReport};
pub use logistic::{hs_lr_loss, lr_loss, ss_lr_loss};
pub use selection::{select_hard_negatives, selection_count};
pub use softmax::{hs_sr_loss, sr_loss};

/// Ground-truth label set of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLabels", into = "RawLabels")]
pub struct TargetLabels {
    positives: Vec<usize>,
    classes: usize,
}

#[derive(Serialize, Deserialize)]
struct RawLabels {
    positives: Vec<usize>,
    classes: usize,
}

impl TryFrom<RawLabels> for TargetLabels {
    type Error = Error;

    fn try_from(raw: RawLabels) -> Result<Self> {
        TargetLabels::new(raw.positives, raw.classes)
    }
}

impl From<TargetLabels> for RawLabels {
    fn from(t: TargetLabels) -> Self {
        RawLabels {
            positives: t.positives,
            classes: t.classes,
        }
    }
}

impl TargetLabels {
    /// Builds a label set; indices are stored sorted.
    pub fn new(mut positives: Vec<usize>, classes: usize) -> Result<Self> {
        if positives.is_empty() {
            return Err(Error::invalid_input("label set is empty"));
        }
        positives.sort_unstable();
        if positives.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid_input("duplicate label index"));
        }
        if let Some(&bad) = positives.iter().find(|&&p| p >= classes) {
            return Err(Error::invalid_input(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self { positives, classes })
    }

    pub fn single(label: usize, classes: usize) -> Result<Self> {
        Self::new(vec![label], classes)
    }

    pub fn positives(&self) -> &[usize] {
        &self.positives
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn is_single(&self) -> bool {
        self.positives.len() == 1
    }

    /// The label when there is exactly one.
    pub fn single_label(&self) -> Option<usize> {
        self.is_single().then(|| self.positives[0])
    }

    pub fn contains(&self, k: usize) -> bool {
        self.positives.binary_search(&k).is_ok()
    }

    pub fn negative_count(&self) -> usize {
        self.classes - self.positives.len()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.classes];
        for &p in &self.positives {
            mask[p] = true;
        }
        mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "sr")]
    Sr,
    #[serde(rename = "lr")]
    Lr,
    #[serde(rename = "hs-lr")]
    HsLr,
    #[serde(rename = "ss-lr")]
    SsLr,
    #[serde(rename = "hs-sr")]
    HsSr,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Sr,
        Variant::Lr,
        Variant::HsLr,
        Variant::SsLr,
        Variant::HsSr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Sr => "sr",
            Variant::Lr => "lr",
            Variant::HsLr => "hs-lr",
            Variant::SsLr => "ss-lr",
            Variant::HsSr => "hs-sr",
        }
    }

    /// Softmax-based variants only accept a single label per sample.
    pub fn requires_single_label(self) -> bool {
        matches!(self, Variant::Sr | Variant::HsSr)
    }

    /// Whether the loss splits additively into a positive and a negative term.
    pub fn is_additive(self) -> bool {
        !matches!(self, Variant::Sr)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s) || v.name().replace('-', "_") == s)
            .ok_or_else(|| {
                Error::UnsupportedVariant(format!(
                    "`{s}` (expected one of sr, lr, hs-lr, ss-lr, hs-sr)"
                ))
            })
    }
}

fn default_m() -> f64 {
    25.0
}

fn default_beta() -> f64 {
    10.0
}

fn default_r() -> f64 {
    2.0
}

/// Loss selector and hyperparameters. Fields a variant does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub variant: Variant,
    /// Percentage of negatives kept by hard selection, in `[0, 100]`.
    #[serde(default = "default_m")]
    pub m: f64,
    /// Numerator of the negative-class weight.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Soft-selection exponent on the negative probabilities.
    #[serde(default = "default_r")]
    pub r: f64,
    /// Treat the soft-selection weight `p^r` as a constant when differentiating.
    #[serde(default)]
    pub detach_weight: bool,
}

impl LossConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            m: default_m(),
            beta: default_beta(),
            r: default_r(),
            detach_weight: false,
        }
    }

    pub fn with_m(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_detach_weight(mut self, detach: bool) -> Self {
        self.detach_weight = detach;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.m) {
            return Err(Error::invalid_config(format!(
                "loss.m = {} outside [0, 100]",
                self.m
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid_config(format!(
                "loss.beta = {} must be positive",
                self.beta
            )));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::invalid_config(format!(
                "loss.r = {} must be >= 0",
                self.r
            )));
        }
        Ok(())
    }
}

/// Value, gradient and positive/negative decomposition of one sample's loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<T> {
    pub loss: T,
    /// Gradient of `loss` w.r.t. each logit.
    pub grad: Vec<T>,
    /// Term attributed to the ground-truth class(es). Holds the full loss for
    /// plain softmax regression, which does not split additively.
    pub pos_loss: T,
    pub neg_loss: T,
    /// L2 norm of `grad` restricted to the positive classes.
    pub pos_grad_norm: T,
    /// L2 norm of `grad` restricted to the negative classes.
    pub neg_grad_norm: T,
    /// Negatives kept by hard selection, in selection order.
    pub selected_negatives: Option<Vec<usize>>,
}

impl<T: Scalar> LossOutput<T> {
    fn assemble(
        grad: Vec<T>,
        pos_loss: T,
        neg_loss: T,
        y: &TargetLabels,
        selected_negatives: Option<Vec<usize>>,
    ) -> Self {
        let (mut pos_sq, mut neg_sq) = (T::zero(), T::zero());
        for (k, &g) in grad.iter().enumerate() {
            if y.contains(k) {
                pos_sq = pos_sq + g * g;
            } else {
                neg_sq = neg_sq + g * g;
            }
        }
        Self {
            loss: pos_loss + neg_loss,
            grad,
            pos_loss,
            neg_loss,
            pos_grad_norm: pos_sq.sqrt(),
            neg_grad_norm: neg_sq.sqrt(),
            selected_negatives,
        }
    }
}

fn check_shapes<T: Scalar>(z: &Logits<T>, y: &TargetLabels) -> Result<()> {
    if z.len() != y.classes() {
        return Err(Error::Shape(format!(
            "{} logits for a {}-class label set",
            z.len(),
            y.classes()
        )));
    }
    Ok(())
}

fn require_negatives(y: &TargetLabels) -> Result<()> {
    if y.negative_count() == 0 {
        return Err(Error::invalid_input(
            "every class is positive, there are no negatives to select",
        ));
    }
    Ok(())
}

/// Evaluates the objective selected by `cfg.variant`.
pub fn evaluate<T: Scalar>(
    z: &Logits<T>,
    y: &TargetLabels,
    cfg: &LossConfig,
) -> Result<LossOutput<T>> {
    match cfg.variant {
        Variant::Sr => sr_loss(z, y),
        Variant::Lr => lr_loss(z, y),
        Variant::HsLr => hs_lr_loss(z, y, cfg),
        Variant::SsLr => ss_lr_loss(z, y, cfg),
        Variant::HsSr => hs_sr_loss(z, y, cfg),
    }
}
