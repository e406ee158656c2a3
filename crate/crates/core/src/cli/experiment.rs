//! One training run per seed: build the data, initialise, train, evaluate.

use std::path::Path;

use crate::data::{Dataset, Standardizer};
use crate::diagnostics::TrainingTrace;
use crate::error::{Error, Result};
use crate::math::SeededRng;
use crate::matrix::Matrix;
use crate::metrics::{
    balanced_accuracy, multilabel_report, retrieval_eval, top1_accuracy, DistanceMetric,
    EvalReport, Task,
};
use crate::model::{argmax, train, Checkpoint, Mlp, TrainConfig};
use crate::scalar::Scalar;

use super::config::{EvalConfig, EvalData, Precision, RunConfig};

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub trace: TrainingTrace,
    pub report: EvalReport,
    pub checkpoint: Checkpoint,
}

/// Trains and evaluates `cfg` with run seed `seed`. Relative file paths in
/// the data section resolve against `base_dir`.
///
/// The model is initialised from stream 0 of the run seed and the batches
/// are shuffled from stream 1; the data use their own seed when the config
/// pins one.
pub fn run_seed(cfg: &RunConfig, seed: u64, base_dir: &Path) -> Result<RunOutcome> {
    match cfg.model.precision {
        Precision::F64 => run_typed::<f64>(cfg, seed, base_dir),
        Precision::F32 => run_typed::<f32>(cfg, seed, base_dir),
    }
}

fn run_typed<T: Scalar>(cfg: &RunConfig, seed: u64, base_dir: &Path) -> Result<RunOutcome> {
    let mut prepared = cfg.data.prepare(seed, base_dir)?;
    let standardizer = if cfg.data.standardize() {
        let s = Standardizer::fit(&prepared.train);
        s.apply(&mut prepared.train)?;
        match &mut prepared.eval {
            EvalData::Labeled(d) => s.apply(d)?,
            EvalData::Retrieval { query, gallery } => {
                s.apply(query)?;
                s.apply(gallery)?;
            }
        }
        Some(s)
    } else {
        None
    };

    let train_set = &prepared.train;
    let mut dims = vec![train_set.dim()];
    dims.extend(&cfg.model.hidden);
    dims.push(train_set.classes());
    let mut model = Mlp::<T>::init(&dims, &mut SeededRng::with_stream(seed, 0))?;
    let train_cfg = TrainConfig {
        epochs: cfg.training.epochs,
        batch_size: cfg.training.batch_size,
        seed,
        trace_stride: cfg.output.trace_stride,
    };
    let trace = train(&mut model, train_set, &cfg.loss, &cfg.optimizer, &train_cfg)?;

    let report = match &prepared.eval {
        EvalData::Labeled(d) => evaluate_labeled(&model, d, prepared.task, &cfg.eval)?,
        EvalData::Retrieval { query, gallery } => {
            evaluate_retrieval(&model, query, gallery, cfg.eval.distance)?
        }
    };
    Ok(RunOutcome {
        seed,
        trace,
        report,
        checkpoint: Checkpoint::from_model(&model, seed, standardizer),
    })
}

fn all_rows<T: Scalar>(data: &Dataset) -> Matrix<T> {
    data.features().cast()
}

/// Classification or multi-label metrics of `model` on `data`.
pub fn evaluate_labeled<T: Scalar>(
    model: &Mlp<T>,
    data: &Dataset,
    task: Task,
    eval: &EvalConfig,
) -> Result<EvalReport> {
    if data.classes() != model.classes() {
        return Err(Error::Shape(format!(
            "model predicts {} classes, dataset has {}",
            model.classes(),
            data.classes()
        )));
    }
    let logits = model.predict(&all_rows::<T>(data))?;
    let mut report = EvalReport::empty(task, data.len());
    match task {
        Task::Classify => {
            let labels = data
                .single_labels()
                .ok_or_else(|| Error::invalid_input("classification needs single-label data"))?;
            report.top1 = Some(top1_accuracy(&logits, &labels)?);
            let predictions: Vec<Vec<usize>> =
                logits.iter_rows().map(|r| vec![argmax(r)]).collect();
            let balanced = balanced_accuracy(&predictions, data.labels(), data.classes())?;
            report.balanced_per_class_acc = Some(balanced.value);
            report.excluded = balanced.absent_classes.len();
        }
        Task::Multilabel => {
            if data.is_single_label() {
                return Err(Error::invalid_input(
                    "multi-label evaluation needs a multi-label dataset",
                ));
            }
            let r = multilabel_report(&logits, data.labels(), eval.top_t)?;
            report.per_image_acc_top5 = Some(r.per_image_acc);
            report.per_class_acc_top5 = Some(r.per_class_acc);
            report.per_image_map = Some(r.per_image_map);
            report.per_class_map = Some(r.per_class_map);
            report.excluded = r.absent_classes;
        }
        Task::Retrieve => {
            return Err(Error::invalid_input(
                "retrieval needs a query and a gallery set",
            ))
        }
    }
    report.validate()?;
    Ok(report)
}

/// Rank-1 and mAP on penultimate-layer embeddings.
pub fn evaluate_retrieval<T: Scalar>(
    model: &Mlp<T>,
    query: &Dataset,
    gallery: &Dataset,
    distance: DistanceMetric,
) -> Result<EvalReport> {
    let ids = |d: &Dataset| {
        d.single_labels()
            .ok_or_else(|| Error::invalid_input("retrieval needs one identity per row"))
    };
    let r = retrieval_eval(
        &model.embed(&all_rows::<T>(query))?,
        &model.embed(&all_rows::<T>(gallery))?,
        &ids(query)?,
        &ids(gallery)?,
        distance,
    )?;
    let mut report = EvalReport::empty(Task::Retrieve, query.len());
    report.rank1 = Some(r.rank1);
    report.map_retrieval = Some(r.map);
    report.excluded = r.excluded;
    report.validate()?;
    Ok(report)
}
