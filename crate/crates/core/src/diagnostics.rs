//! Training diagnostics for negative-class distraction: positive/negative loss
//! curves and the positive-to-negative gradient ratio.
//!
//! The gradient ratio of a batch is
//!
//! ```text
//! grad_ratio = mean_b ‖∂L_b/∂z_pos‖₂ / (mean_b ‖∂L_b/∂z_neg‖₂ + 1e-12)
//! ```
//!
//! i.e. L2 norms of the logit gradient restricted to the positive and to the
//! negative classes, averaged over the batch, then divided. It is computed in
//! [`gradient_ratio`] only.
//!
//! For plain softmax regression `pos_loss` holds the whole loss and
//! `neg_loss` is 0, since that loss is not a sum of per-class terms.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DatasetMeta;
use crate::error::{Error, Result};
use crate::losses::{LossConfig, LossOutput};
use crate::model::OptimizerConfig;
use crate::scalar::Scalar;

pub const CSV_HEADER: &str =
    "step,epoch,total_loss,pos_loss,neg_loss,grad_ratio,train_batch_acc,lr";

const RATIO_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub epoch: u64,
    pub total_loss: f64,
    pub pos_loss: f64,
    pub neg_loss: f64,
    pub grad_ratio: f64,
    pub train_batch_acc: f64,
    pub lr: f64,
    /// Set when any recorded quantity was non-finite.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub non_finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: u64,
    pub mean_loss: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub loss: Option<LossConfig>,
    pub optimizer: Option<OptimizerConfig>,
    pub dataset: Option<DatasetMeta>,
    pub seed: u64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub run_meta: RunMeta,
    pub records: Vec<TraceRecord>,
    #[serde(default)]
    pub epochs: Vec<EpochSummary>,
}

/// Per-step values that do not come from the loss outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub step: u64,
    pub epoch: u64,
    pub train_batch_acc: f64,
    pub lr: f64,
}

/// `mean(pos_norms) / (mean(neg_norms) + 1e-12)`.
pub fn gradient_ratio(pos_norms: &[f64], neg_norms: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    mean(pos_norms) / (mean(neg_norms) + RATIO_EPS)
}

impl TrainingTrace {
    pub fn new(run_meta: RunMeta) -> Self {
        Self {
            run_meta,
            records: Vec::new(),
            epochs: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Appends one record of batch means. Returns `Ok(false)` when the row
    /// had to be flagged as non-finite; aborting is up to the caller.
    pub fn record_step<T: Scalar>(
        &mut self,
        outputs: &[LossOutput<T>],
        ctx: StepContext,
    ) -> Result<bool> {
        if outputs.is_empty() {
            return Err(Error::invalid_input("cannot record an empty batch"));
        }
        if let Some(last) = self.records.last() {
            if ctx.step <= last.step {
                return Err(Error::invalid_input(format!(
                    "step {} does not follow step {}",
                    ctx.step, last.step
                )));
            }
        }
        let n = outputs.len() as f64;
        let mean =
            |f: fn(&LossOutput<T>) -> T| outputs.iter().map(|o| f(o).as_f64()).sum::<f64>() / n;
        let pos_norms: Vec<f64> = outputs.iter().map(|o| o.pos_grad_norm.as_f64()).collect();
        let neg_norms: Vec<f64> = outputs.iter().map(|o| o.neg_grad_norm.as_f64()).collect();
        let pos_loss = mean(|o| o.pos_loss);
        let neg_loss = mean(|o| o.neg_loss);
        let mut record = TraceRecord {
            step: ctx.step,
            epoch: ctx.epoch,
            total_loss: pos_loss + neg_loss,
            pos_loss,
            neg_loss,
            grad_ratio: gradient_ratio(&pos_norms, &neg_norms),
            train_batch_acc: ctx.train_batch_acc,
            lr: ctx.lr,
            non_finite: false,
        };
        let finite = [
            record.total_loss,
            record.pos_loss,
            record.neg_loss,
            record.grad_ratio,
            record.train_batch_acc,
            record.lr,
        ]
        .iter()
        .all(|v| v.is_finite());
        record.non_finite = !finite;
        self.records.push(record);
        Ok(finite)
    }
}

fn fmt_real(v: f64) -> String {
    // 17 significant digits reproduce every f64 exactly
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(trace: &TrainingTrace, mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            r.epoch,
            fmt_real(r.total_loss),
            fmt_real(r.pos_loss),
            fmt_real(r.neg_loss),
            fmt_real(r.grad_ratio),
            fmt_real(r.train_batch_acc),
            fmt_real(r.lr)
        )?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Schema(format!(
            "unexpected trace header `{}`",
            header.join(",")
        )));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Schema(format!("trace line {line}: bad {what}"));
        let real = |i: usize, what: &str| row[i].parse::<f64>().map_err(|_| bad(what));
        let record = TraceRecord {
            step: row[0].parse().map_err(|_| bad("step"))?,
            epoch: row[1].parse().map_err(|_| bad("epoch"))?,
            total_loss: real(2, "total_loss")?,
            pos_loss: real(3, "pos_loss")?,
            neg_loss: real(4, "neg_loss")?,
            grad_ratio: real(5, "grad_ratio")?,
            train_batch_acc: real(6, "train_batch_acc")?,
            lr: real(7, "lr")?,
            non_finite: false,
        };
        records.push(TraceRecord {
            non_finite: ![
                record.total_loss,
                record.pos_loss,
                record.neg_loss,
                record.grad_ratio,
                record.train_batch_acc,
                record.lr,
            ]
            .iter()
            .all(|v| v.is_finite()),
            ..record
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    Csv,
    Json,
}

pub fn export(trace: &TrainingTrace, format: TraceFormat, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        TraceFormat::Csv => write_csv(trace, &mut out)?,
        TraceFormat::Json => {
            serde_json::to_writer_pretty(&mut out, trace)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn import_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    read_csv(File::open(path)?)
}

pub fn import_json(path: &Path) -> Result<TrainingTrace> {
    Ok(serde_json::from_reader(std::io::BufReader::new(
        File::open(path)?,
    ))?)
}

/// Early-training view of a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NcdSummary {
    pub window: usize,
    pub median_early_grad_ratio: f64,
    pub pos_loss_slope: f64,
    pub neg_loss_slope: f64,
    /// -1, 0 or +1.
    pub pos_loss_trend_sign: i8,
    pub neg_loss_trend_sign: i8,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn trend_sign(slope: f64, xs: &[f64], ys: &[f64]) -> i8 {
    // a change below rounding noise over the window counts as flat
    let span = xs.last().unwrap_or(&0.0) - xs.first().unwrap_or(&0.0);
    let scale = ys.iter().fold(0.0_f64, |a, y| a.max(y.abs()));
    if (slope * span).abs() <= 1e-9 * (scale + 1e-300) {
        0
    } else if slope > 0.0 {
        1
    } else {
        -1
    }
}

/// Median gradient ratio and loss trends over the first `early_fraction` of
/// the records (at least 2 records).
pub fn summarize_ncd(trace: &TrainingTrace, early_fraction: f64) -> Result<NcdSummary> {
    let n = trace.records.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!(
            "NCD summary needs at least 10 records, trace has {n}"
        )));
    }
    if !(early_fraction > 0.0 && early_fraction <= 1.0) {
        return Err(Error::invalid_input("early_fraction must lie in (0, 1]"));
    }
    let window = ((n as f64 * early_fraction).floor() as usize).clamp(2, n);
    let early = &trace.records[..window];
    let xs: Vec<f64> = early.iter().map(|r| r.step as f64).collect();
    let pos: Vec<f64> = early.iter().map(|r| r.pos_loss).collect();
    let neg: Vec<f64> = early.iter().map(|r| r.neg_loss).collect();
    let mut ratios: Vec<f64> = early.iter().map(|r| r.grad_ratio).collect();
    let pos_slope = slope(&xs, &pos);
    let neg_slope = slope(&xs, &neg);
    Ok(NcdSummary {
        window,
        median_early_grad_ratio: median(&mut ratios),
        pos_loss_slope: pos_slope,
        neg_loss_slope: neg_slope,
        pos_loss_trend_sign: trend_sign(pos_slope, &xs, &pos),
        neg_loss_trend_sign: trend_sign(neg_slope, &xs, &neg),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{lr_loss, TargetLabels};
    use crate::math::Logits;

    fn ctx(step: u64) -> StepContext {
        StepContext {
            step,
            epoch: 0,
            train_batch_acc: 0.5,
            lr: 0.1,
        }
    }

    fn record(step: u64, pos: f64, neg: f64, ratio: f64) -> TraceRecord {
        TraceRecord {
            step,
            epoch: step / 10,
            total_loss: pos + neg,
            pos_loss: pos,
            neg_loss: neg,
            grad_ratio: ratio,
            train_batch_acc: 0.25,
            lr: 0.1,
            non_finite: false,
        }
    }

    #[test]
    fn lr_at_zero_logits() {
        let k = 100;
        let outputs: Vec<_> = (0..8)
            .map(|i| {
                lr_loss(
                    &Logits::new(vec![0.0_f64; k]).unwrap(),
                    &TargetLabels::single(i, k).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let mut trace = TrainingTrace::default();
        assert!(trace.is_empty());
        assert!(trace.record_step(&outputs, ctx(1)).unwrap());
        let r = &trace.records[0];
        assert!((r.pos_loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((r.neg_loss - 99.0 * std::f64::consts::LN_2).abs() < 1e-10);
        // 0.5 / (0.5 * sqrt(99))
        assert!((r.grad_ratio - 1.0 / 99f64.sqrt()).abs() < 1e-12);
        assert!((r.grad_ratio - 0.1005).abs() < 1e-4);
        assert!((r.total_loss - (r.pos_loss + r.neg_loss)).abs() < 1e-8);
    }

    #[test]
    fn rejects_empty_batch_and_non_increasing_steps() {
        let mut trace = TrainingTrace::default();
        let empty: Vec<LossOutput<f64>> = Vec::new();
        assert!(trace.record_step(&empty, ctx(1)).is_err());
        let out = vec![lr_loss(
            &Logits::new(vec![0.0_f64; 3]).unwrap(),
            &TargetLabels::single(0, 3).unwrap(),
        )
        .unwrap()];
        trace.record_step(&out, ctx(2)).unwrap();
        assert!(trace.record_step(&out, ctx(2)).is_err());
    }

    #[test]
    fn non_finite_rows_are_flagged() {
        let mut out = lr_loss(
            &Logits::new(vec![0.0_f64; 3]).unwrap(),
            &TargetLabels::single(0, 3).unwrap(),
        )
        .unwrap();
        out.neg_loss = f64::NAN;
        let mut trace = TrainingTrace::default();
        assert!(!trace.record_step(&[out], ctx(1)).unwrap());
        assert!(trace.records[0].non_finite);
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let mut trace = TrainingTrace::default();
        trace
            .records
            .push(record(1, 0.1 + 0.2, 1.0 / 3.0, std::f64::consts::PI));
        let mut buf = Vec::new();
        write_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_csv(&buf[..]).unwrap(), trace.records);
    }

    #[test]
    fn json_carries_the_seed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.trace.json");
        let mut trace = TrainingTrace::new(RunMeta {
            seed: 1234,
            ..RunMeta::default()
        });
        trace.records.push(record(1, 0.5, 0.25, 2.0));
        export(&trace, TraceFormat::Json, &path).unwrap();
        let value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(value["run_meta"]["seed"], 1234);
        assert_eq!(import_json(&path).unwrap(), trace);
    }

    #[test]
    fn summary_needs_ten_records() {
        let mut trace = TrainingTrace::default();
        for s in 1..=9 {
            trace.records.push(record(s, 1.0, 1.0, 1.0));
        }
        assert!(matches!(
            summarize_ncd(&trace, 0.1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn constant_trace_is_flat() {
        let mut trace = TrainingTrace::default();
        for s in 1..=50 {
            trace.records.push(record(s, 0.1, 0.7, 0.3));
        }
        let s = summarize_ncd(&trace, 0.2).unwrap();
        assert_eq!(s.window, 10);
        assert_eq!(s.pos_loss_trend_sign, 0);
        assert_eq!(s.neg_loss_trend_sign, 0);
        assert!((s.median_early_grad_ratio - 0.3).abs() < 1e-15);
    }

    #[test]
    fn trends_follow_the_window() {
        let mut trace = TrainingTrace::default();
        for s in 1..=100u64 {
            let t = s as f64;
            trace
                .records
                .push(record(s, 0.5 + 0.01 * t, 50.0 - 0.2 * t, t));
        }
        let s = summarize_ncd(&trace, 0.1).unwrap();
        assert_eq!(s.pos_loss_trend_sign, 1);
        assert_eq!(s.neg_loss_trend_sign, -1);
        assert!((s.neg_loss_slope + 0.2).abs() < 1e-9);
        assert!((s.median_early_grad_ratio - 5.5).abs() < 1e-12);
    }

    #[test]
    fn ratio_definition() {
        assert!((gradient_ratio(&[1.0, 3.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
        assert!(gradient_ratio(&[1.0], &[0.0]) > 1e11);
    }
}
