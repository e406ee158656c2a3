use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::mlp::{Dense, Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "sgd")]
    SgdMomentum,
    #[serde(rename = "adam")]
    Adam,
}

fn default_momentum() -> f64 {
    0.9
}

fn default_weight_decay() -> f64 {
    1e-4
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

fn default_decay_factor() -> f64 {
    0.1
}

/// Optimizer hyperparameters. `learning_rate` defaults to 0.1 for SGD and
/// 3e-4 for Adam when left unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    /// Epoch (0-based) from which the learning rate is multiplied by
    /// `lr_decay_factor`. No decay when unset.
    #[serde(default)]
    pub lr_decay_epoch: Option<usize>,
    #[serde(default = "default_decay_factor")]
    pub lr_decay_factor: f64,
}

impl OptimizerConfig {
    pub fn sgd() -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum,
            learning_rate: None,
            momentum: default_momentum(),
            weight_decay: default_weight_decay(),
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            lr_decay_epoch: None,
            lr_decay_factor: default_decay_factor(),
        }
    }

    pub fn adam() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            ..Self::sgd()
        }
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = Some(lr);
        self
    }

    pub fn with_momentum(mut self, momentum: f64) -> Self {
        self.momentum = momentum;
        self
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn base_learning_rate(&self) -> f64 {
        self.learning_rate.unwrap_or(match self.kind {
            OptimizerKind::SgdMomentum => 0.1,
            OptimizerKind::Adam => 3e-4,
        })
    }

    /// Learning rate in effect during `epoch`.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_epoch {
            Some(at) if epoch >= at => self.base_learning_rate() * self.lr_decay_factor,
            _ => self.base_learning_rate(),
        }
    }

    /// Same configuration with the default learning rate written out.
    pub fn resolved(&self) -> Self {
        Self {
            learning_rate: Some(self.base_learning_rate()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.base_learning_rate();
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::invalid_config(format!(
                "optimizer.learning_rate = {lr} must be >= 0"
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid_config(format!(
                "optimizer.momentum = {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid_config("optimizer.weight_decay must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid_config("adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::invalid_config("optimizer.adam_eps must be > 0"));
        }
        Ok(())
    }
}

/// Moment buffers shaped like the model parameters.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    first: Vec<Dense<T>>,
    second: Vec<Dense<T>>,
    steps: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig, model: &Mlp<T>) -> Result<Self> {
        config.validate()?;
        let shaped = || {
            model
                .layers()
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect::<Vec<_>>()
        };
        let second = match config.kind {
            OptimizerKind::Adam => shaped(),
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        Ok(Self {
            config,
            first: shaped(),
            second,
            steps: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update with learning rate `lr`. Weight decay is added to the
    /// gradient (L2 regularisation) for both optimizers, not decoupled.
    ///
    /// SGD: `v <- mu v + (g + lambda theta)`, `theta <- theta - lr v`.
    /// Adam: bias-corrected moments of `g + lambda theta`,
    /// `theta <- theta - lr m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// Nothing is modified when a gradient entry is non-finite.
    pub fn step(&mut self, model: &mut Mlp<T>, grads: &Gradients<T>, lr: f64) -> Result<()> {
        if grads.layers.len() != model.layers().len() {
            return Err(Error::Shape(
                "gradient layer count differs from model".into(),
            ));
        }
        for (l, (g, p)) in grads.layers.iter().zip(model.layers()).enumerate() {
            if g.weights.len() != p.weights.len() || g.biases.len() != p.biases.len() {
                return Err(Error::Shape(format!(
                    "gradient of layer {l} has the wrong size"
                )));
            }
            let bad = g
                .weights
                .iter()
                .position(|v| !v.is_finite())
                .map(|i| format!("weights[{i}]"))
                .or_else(|| {
                    g.biases
                        .iter()
                        .position(|v| !v.is_finite())
                        .map(|i| format!("biases[{i}]"))
                });
            if let Some(at) = bad {
                return Err(Error::NonFinite(format!(
                    "gradient of layer {l} {at} at optimizer step {}",
                    self.steps + 1
                )));
            }
        }
        self.steps += 1;
        let lr = T::lit(lr);
        let decay = T::lit(self.config.weight_decay);
        match self.config.kind {
            OptimizerKind::SgdMomentum => {
                let mu = T::lit(self.config.momentum);
                for ((p, g), v) in model
                    .layers_mut()
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut self.first)
                {
                    sgd_update(&mut p.weights, &g.weights, &mut v.weights, mu, decay, lr);
                    sgd_update(&mut p.biases, &g.biases, &mut v.biases, mu, decay, lr);
                }
            }
            OptimizerKind::Adam => {
                let c = AdamCoefficients::new(&self.config, self.steps, lr);
                for (((p, g), m), v) in model
                    .layers_mut()
                    .iter_mut()
                    .zip(&grads.layers)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    adam_update(
                        &mut p.weights,
                        &g.weights,
                        &mut m.weights,
                        &mut v.weights,
                        &c,
                        decay,
                    );
                    adam_update(
                        &mut p.biases,
                        &g.biases,
                        &mut m.biases,
                        &mut v.biases,
                        &c,
                        decay,
                    );
                }
            }
        }
        Ok(())
    }
}

fn sgd_update<T: Scalar>(theta: &mut [T], grad: &[T], velocity: &mut [T], mu: T, decay: T, lr: T) {
    for ((t, &g), v) in theta.iter_mut().zip(grad).zip(velocity) {
        *v = mu * *v + (g + decay * *t);
        *t = *t - lr * *v;
    }
}

struct AdamCoefficients<T> {
    beta1: T,
    beta2: T,
    correction1: T,
    correction2: T,
    eps: T,
    lr: T,
}

impl<T: Scalar> AdamCoefficients<T> {
    fn new(config: &OptimizerConfig, step: u64, lr: T) -> Self {
        let t = step as i32;
        Self {
            beta1: T::lit(config.adam_beta1),
            beta2: T::lit(config.adam_beta2),
            correction1: T::lit(1.0 - config.adam_beta1.powi(t)),
            correction2: T::lit(1.0 - config.adam_beta2.powi(t)),
            eps: T::lit(config.adam_eps),
            lr,
        }
    }
}

fn adam_update<T: Scalar>(
    theta: &mut [T],
    grad: &[T],
    first: &mut [T],
    second: &mut [T],
    c: &AdamCoefficients<T>,
    decay: T,
) {
    for (((t, &g), m), v) in theta.iter_mut().zip(grad).zip(first).zip(second) {
        let g = g + decay * *t;
        *m = c.beta1 * *m + (T::one() - c.beta1) * g;
        *v = c.beta2 * *v + (T::one() - c.beta2) * g * g;
        let m_hat = *m / c.correction1;
        let v_hat = *v / c.correction2;
        *t = *t - c.lr * m_hat / (v_hat.sqrt() + c.eps);
    }
}
