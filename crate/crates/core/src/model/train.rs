use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diagnostics::{EpochSummary, RunMeta, StepContext, TrainingTrace};
use crate::error::{Error, Result};
use crate::losses::{evaluate, LossConfig, LossOutput};
use crate::math::{Logits, SeededRng};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

use super::mlp::Mlp;
use super::optim::{Optimizer, OptimizerConfig};

fn default_batch_size() -> usize {
    128
}

fn default_stride() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Record every `trace_stride`-th step (1 records all of them).
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            seed,
            trace_stride: 1,
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

fn diverged(step: u64, reason: String, mut trace: TrainingTrace, started: Instant) -> Error {
    trace.run_meta.wall_time_secs = started.elapsed().as_secs_f64();
    Error::Diverged {
        step,
        reason,
        trace: Box::new(trace),
    }
}

/// Mini-batch training of `model` in place.
///
/// Each epoch visits a fresh permutation of the rows drawn from stream 1 of
/// `cfg.seed`; the last partial batch is kept. The learning rate follows
/// `opt.learning_rate_at(epoch)`. Every step computes the per-sample losses
/// in row order, records a trace row (subject to `trace_stride`), then
/// backpropagates the batch mean.
///
/// A non-finite loss or gradient stops training with [`Error::Diverged`],
/// which carries the trace up to that point.
pub fn train<T: Scalar>(
    model: &mut Mlp<T>,
    data: &Dataset,
    loss: &LossConfig,
    opt: &OptimizerConfig,
    cfg: &TrainConfig,
) -> Result<TrainingTrace> {
    let started = Instant::now();
    loss.validate()?;
    if data.is_empty() {
        return Err(Error::invalid_input("training set is empty"));
    }
    if loss.variant.requires_single_label() && !data.is_single_label() {
        return Err(Error::UnsupportedVariant(format!(
            "{} cannot train on multi-label data",
            loss.variant
        )));
    }
    if data.classes() != model.classes() || data.dim() != model.input_dim() {
        return Err(Error::Shape(format!(
            "model maps {} -> {} but data has {} features and {} classes",
            model.input_dim(),
            model.classes(),
            data.dim(),
            data.classes()
        )));
    }
    if cfg.batch_size == 0 || cfg.trace_stride == 0 {
        return Err(Error::invalid_config(
            "batch_size and trace_stride must be >= 1",
        ));
    }

    let mut trace = TrainingTrace::new(RunMeta {
        loss: Some(loss.clone()),
        optimizer: Some(opt.resolved()),
        dataset: Some(data.meta.clone()),
        seed: cfg.seed,
        wall_time_secs: 0.0,
    });
    let mut optimizer = Optimizer::new(opt.clone(), model)?;
    let mut rng = SeededRng::with_stream(cfg.seed, 1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let classes = data.classes();
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        let lr = opt.learning_rate_at(epoch);
        rng.shuffle(&mut order);
        let (mut epoch_loss, mut epoch_hits) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let (x, labels) = data.batch::<T>(chunk);
            let (logits, cache) = model.forward(&x)?;
            let mut outputs: Vec<LossOutput<T>> = Vec::with_capacity(chunk.len());
            let mut hits = 0usize;
            for (row, y) in logits.iter_rows().zip(&labels) {
                let z = match Logits::from_slice(row) {
                    Ok(z) => z,
                    Err(e) => return Err(diverged(step, e.to_string(), trace, started)),
                };
                if y.contains(argmax(row)) {
                    hits += 1;
                }
                outputs.push(evaluate(&z, y, loss)?);
            }
            let batch_acc = hits as f64 / chunk.len() as f64;
            let ctx = StepContext {
                step,
                epoch: epoch as u64,
                train_batch_acc: batch_acc,
                lr,
            };
            let finite = outputs
                .iter()
                .all(|o| o.loss.is_finite() && o.grad.iter().all(|g| g.is_finite()));
            if (step - 1).is_multiple_of(cfg.trace_stride) || !finite {
                trace.record_step(&outputs, ctx)?;
            }
            if !finite {
                return Err(diverged(step, "non-finite loss".into(), trace, started));
            }
            epoch_loss += outputs.iter().map(|o| o.loss.as_f64()).sum::<f64>();
            epoch_hits += hits;

            let mut loss_grads = Matrix::zeros(chunk.len(), classes);
            for (b, o) in outputs.iter().enumerate() {
                loss_grads.row_mut(b).copy_from_slice(&o.grad);
            }
            let grads = model.backward(&cache, &loss_grads)?;
            if let Err(e) = optimizer.step(model, &grads, lr) {
                return match e {
                    Error::NonFinite(msg) => Err(diverged(step, msg, trace, started)),
                    other => Err(other),
                };
            }
            if !model.is_finite() {
                return Err(diverged(
                    step,
                    "non-finite parameters".into(),
                    trace,
                    started,
                ));
            }
        }
        trace.epochs.push(EpochSummary {
            epoch: epoch as u64,
            mean_loss: epoch_loss / data.len() as f64,
            train_acc: epoch_hits as f64 / data.len() as f64,
        });
    }
    trace.run_meta.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(trace)
}
