use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{load_delimited, save_delimited, Dataset, DelimitedSchema};
use crate::diagnostics::{export, summarize_ncd, TraceFormat};
use crate::error::{Error, Result};
use crate::losses::{grad_check, LossConfig, Variant};
use crate::metrics::{wilcoxon_signed_rank, DistanceMetric, Task, WilcoxonResult};
use crate::model::{Checkpoint, Mlp};

use super::config::{DataConfig, EvalConfig, EvalData, RunConfig};
use super::experiment::{evaluate_labeled, evaluate_retrieval, run_seed, RunOutcome};

/// Overrides `[output] dir` of every config when set.
pub const OUTPUT_ROOT_ENV: &str = "FOCUSLR_OUTPUT_ROOT";

/// Largest relative gradient error accepted by `grad-check`.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(
    name = "focuslr",
    version,
    about = "Focus-rectified logistic losses: gradient checks, training, evaluation and paired comparisons"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the datasets described by a config's [data] section as CSV
    GenData(GenDataArgs),
    /// Compare analytic loss gradients with central finite differences
    GradCheck(GradCheckArgs),
    /// Train and evaluate a config for one or more seeds
    Train(TrainArgs),
    /// Evaluate a checkpoint on a CSV dataset
    Eval(EvalArgs),
    /// Train two configs that differ only in [loss] on the same seeds and test the difference
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Config file; only its [data] table is read
    pub config: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariantChoice {
    All,
    One(Variant),
}

fn parse_variant(s: &str) -> std::result::Result<VariantChoice, String> {
    if s == "all" {
        return Ok(VariantChoice::All);
    }
    s.parse()
        .map(VariantChoice::One)
        .map_err(|_| format!("unknown variant `{s}` (expected all, sr, lr, hs-lr, ss-lr or hs-sr)"))
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Loss variant, or `all` for every variant and both soft-selection gradient modes
    #[arg(long, default_value = "all", value_parser = parse_variant)]
    pub variant: VariantChoice,
    /// Class counts to check
    #[arg(long = "k", value_delimiter = ',', default_value = "2,5,10,100")]
    pub classes: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Use the detached soft-selection gradient (ss-lr only)
    #[arg(long)]
    pub detach_weight: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        self.first..=self.last
    }
}

fn parse_seeds(s: &str) -> std::result::Result<SeedRange, String> {
    let bad = || format!("`{s}` is not a seed or an inclusive range like 1..10");
    let (first, last) = match s.split_once("..") {
        Some((a, b)) => (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?),
        None => {
            let v = s.parse().map_err(|_| bad())?;
            (v, v)
        }
    };
    if first > last {
        return Err(bad());
    }
    Ok(SeedRange { first, last })
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub config: PathBuf,
    /// Seeds to run, `a..b` inclusive; defaults to [training] seed
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<SeedRange>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled CSV; the query set for `retrieve`
    #[arg(long)]
    pub data: PathBuf,
    /// Gallery CSV (`retrieve` only)
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    #[arg(long, value_parser = |s: &str| s.parse::<Task>().map_err(|e| e.to_string()))]
    pub task: Task,
    #[arg(long, default_value = "cosine", value_parser = |s: &str| s.parse::<DistanceMetric>().map_err(|e| e.to_string()))]
    pub distance: DistanceMetric,
    #[arg(long, default_value_t = 5)]
    pub top_t: usize,
    /// Write the report here as well as to stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub config_a: PathBuf,
    pub config_b: PathBuf,
    #[arg(long, value_parser = parse_seeds, default_value = "1..10")]
    pub seeds: SeedRange,
    /// Report key to compare; by default top1, rank1 or per_class_acc_top5 depending on the task
    #[arg(long)]
    pub metric: Option<String>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 on success, 1 for failed checks and runtime errors,
/// 2 for usage and configuration errors.
pub fn run_cli<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::GradCheck(a) => cmd_grad_check(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Compare(a) => cmd_compare(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidConfig(_)
        | Error::InvalidInput(_)
        | Error::UnsupportedVariant(_)
        | Error::Shape(_)
        | Error::Parse { .. }
        | Error::EmptyDataset(_)
        | Error::Schema(_) => 2,
        _ => 1,
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn output_root(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root),
        _ => cfg.output.dir.clone(),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.config)?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let data = table
        .remove("data")
        .ok_or_else(|| Error::invalid_config("config has no [data] table"))?;
    let data: DataConfig = data
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(format!("[data]: {e}")))?;
    let prepared = data.prepare(args.seed, &config_dir(&args.config))?;
    fs::create_dir_all(&args.out)?;
    let mut files: Vec<(&str, &Dataset)> = vec![("train.csv", &prepared.train)];
    match &prepared.eval {
        EvalData::Labeled(d) => files.push(("test.csv", d)),
        EvalData::Retrieval { query, gallery } => {
            files.push(("query.csv", query));
            files.push(("gallery.csv", gallery));
        }
    }
    for (name, d) in files {
        let path = args.out.join(name);
        save_delimited(d, &path)?;
        println!(
            "{}: {} rows, {} features, {} classes",
            path.display(),
            d.len(),
            d.dim(),
            d.classes()
        );
    }
    Ok(0)
}

pub fn cmd_grad_check(args: &GradCheckArgs) -> Result<i32> {
    if args.classes.is_empty() || args.classes.contains(&0) || args.classes.contains(&1) {
        return Err(Error::invalid_input("--k needs class counts >= 2"));
    }
    let configs: Vec<LossConfig> = match &args.variant {
        VariantChoice::All => {
            let mut v: Vec<LossConfig> = Variant::ALL.iter().map(|&x| LossConfig::new(x)).collect();
            v.push(LossConfig::new(Variant::SsLr).with_detach_weight(true));
            v
        }
        VariantChoice::One(v) => {
            if args.detach_weight && *v != Variant::SsLr {
                return Err(Error::invalid_input(
                    "--detach-weight applies to ss-lr only",
                ));
            }
            vec![LossConfig::new(*v).with_detach_weight(args.detach_weight)]
        }
    };
    let mut all_pass = true;
    for cfg in &configs {
        let name = if cfg.detach_weight {
            format!("{} (detached)", cfg.variant)
        } else {
            cfg.variant.to_string()
        };
        for &k in &args.classes {
            let report = grad_check(cfg, k, args.trials, args.seed)?;
            let pass = report.max_rel_error < GRAD_CHECK_TOLERANCE;
            all_pass &= pass;
            println!(
                "{} {name:<16} k={k:<4} trials={} max_rel_error={:.3e} redraws={}",
                if pass { "PASS" } else { "FAIL" },
                report.trials,
                report.max_rel_error,
                report.redraws
            );
        }
    }
    Ok(if all_pass { 0 } else { 1 })
}

fn run_id(cfg: &RunConfig, seed: u64) -> String {
    format!("{}-seed{seed}", cfg.output.run_name)
}

/// Writes checkpoint, traces, eval report and resolved config of one seed.
fn write_run(cfg: &RunConfig, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let id = run_id(cfg, outcome.seed);
    outcome.checkpoint.save(&dir.join("checkpoint.json"))?;
    export(
        &outcome.trace,
        TraceFormat::Csv,
        &dir.join(format!("{id}.trace.csv")),
    )?;
    export(
        &outcome.trace,
        TraceFormat::Json,
        &dir.join(format!("{id}.trace.json")),
    )?;
    write_json(&outcome.report, &dir.join("eval.json"))?;
    let mut resolved = cfg.resolved();
    resolved.training.seed = outcome.seed;
    fs::write(dir.join("config.resolved.toml"), resolved.to_toml()?)?;
    Ok(())
}

fn seed_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    output_root(cfg)
        .join(&cfg.output.run_name)
        .join(format!("seed-{seed}"))
}

/// Trains every seed of `seeds`, writing per-seed outputs. A diverged run
/// keeps its partial trace on disk and stops the whole command.
fn train_seeds(cfg: &RunConfig, base: &Path, seeds: SeedRange) -> Result<Vec<RunOutcome>> {
    let mut outcomes = Vec::new();
    for seed in seeds.seeds() {
        match run_seed(cfg, seed, base) {
            Ok(outcome) => {
                let dir = seed_dir(cfg, seed);
                write_run(cfg, &outcome, &dir)?;
                eprintln!(
                    "{}: seed {seed} done -> {}",
                    cfg.output.run_name,
                    dir.display()
                );
                outcomes.push(outcome);
            }
            Err(Error::Diverged {
                step,
                reason,
                trace,
            }) => {
                let dir = seed_dir(cfg, seed);
                fs::create_dir_all(&dir)?;
                let path = dir.join(format!("{}.trace.csv", run_id(cfg, seed)));
                export(&trace, TraceFormat::Csv, &path)?;
                return Err(Error::Diverged {
                    step,
                    reason,
                    trace,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(outcomes)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `summary.csv`: one row per seed, then `mean` and `std` (sample) rows.
fn write_summary(outcomes: &[RunOutcome], path: &Path) -> Result<String> {
    let keys: Vec<&str> = outcomes[0]
        .report
        .populated()
        .iter()
        .map(|(k, _)| *k)
        .collect();
    let mut text = format!("seed,{}\n", keys.join(","));
    let column = |k: &str| -> Vec<f64> {
        outcomes
            .iter()
            .map(|o| o.report.get(k).unwrap_or(f64::NAN))
            .collect()
    };
    for o in outcomes {
        let cells: Vec<String> = keys
            .iter()
            .map(|k| format!("{:.16e}", o.report.get(k).unwrap_or(f64::NAN)))
            .collect();
        let _ = writeln!(text, "{},{}", o.seed, cells.join(","));
    }
    let stats: Vec<(f64, f64)> = keys.iter().map(|k| mean_std(&column(k))).collect();
    let means: Vec<String> = stats.iter().map(|s| format!("{:.16e}", s.0)).collect();
    let stds: Vec<String> = stats.iter().map(|s| format!("{:.16e}", s.1)).collect();
    let _ = writeln!(text, "mean,{}", means.join(","));
    let _ = writeln!(text, "std,{}", stds.join(","));
    fs::write(path, &text)?;
    Ok(text)
}

pub fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let cfg = RunConfig::load(&args.config)?;
    let seeds = args.seeds.unwrap_or(SeedRange {
        first: cfg.training.seed,
        last: cfg.training.seed,
    });
    let outcomes = train_seeds(&cfg, &config_dir(&args.config), seeds)?;
    let run_dir = output_root(&cfg).join(&cfg.output.run_name);
    let summary = write_summary(&outcomes, &run_dir.join("summary.csv"))?;
    print!("{summary}");
    Ok(0)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<i32> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let model: Mlp<f64> = ckpt.to_model()?;
    let load = |path: &Path, classes: Option<usize>| -> Result<Dataset> {
        let mut d = load_delimited(
            path,
            &DelimitedSchema {
                classes,
                ..Default::default()
            },
        )?;
        if let Some(s) = &ckpt.standardizer {
            s.apply(&mut d)?;
        }
        Ok(d)
    };
    let report =
        match args.task {
            Task::Retrieve => {
                let gallery = args
                    .gallery
                    .as_ref()
                    .ok_or_else(|| Error::invalid_input("--task retrieve needs --gallery"))?;
                let g = load(gallery, None)?;
                let q = load(&args.data, Some(g.classes()))?;
                let g = if q.classes() > g.classes() {
                    load(gallery, Some(q.classes()))?
                } else {
                    g
                };
                evaluate_retrieval(&model, &q, &g, args.distance)?
            }
            task => {
                if args.gallery.is_some() {
                    return Err(Error::invalid_input(
                        "--gallery only applies to --task retrieve",
                    ));
                }
                let d = load(&args.data, Some(model.classes()))?;
                match (task, d.is_single_label()) {
                    (Task::Multilabel, true) => return Err(Error::invalid_input(
                        "--task multilabel refused: every row of the dataset has a single label",
                    )),
                    (Task::Classify, false) => {
                        return Err(Error::invalid_input(
                            "--task classify refused: the dataset has multi-label rows",
                        ))
                    }
                    _ => {}
                }
                let eval = EvalConfig {
                    distance: args.distance,
                    top_t: args.top_t,
                };
                evaluate_labeled(&model, &d, task, &eval)?
            }
        };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(out) = &args.out {
        fs::write(out, &text)?;
    }
    print!("{text}");
    Ok(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideSummary {
    pub run_name: String,
    pub loss: LossConfig,
    pub values: Vec<f64>,
    pub mean: f64,
    pub median_early_grad_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub metric: String,
    pub seeds: Vec<u64>,
    pub a: SideSummary,
    pub b: SideSummary,
    /// `mean(b) - mean(a)`.
    pub mean_difference: f64,
    /// Wilcoxon signed-rank test on the per-seed pairs, absent when it is
    /// undefined (see `wilcoxon_error`).
    pub wilcoxon: Option<WilcoxonResult>,
    pub wilcoxon_error: Option<String>,
}

fn default_metric(task: Task) -> &'static str {
    match task {
        Task::Classify => "top1",
        Task::Retrieve => "rank1",
        Task::Multilabel => "per_class_acc_top5",
    }
}

fn side(cfg: &RunConfig, outcomes: &[RunOutcome], metric: &str) -> Result<SideSummary> {
    let values = outcomes
        .iter()
        .map(|o| {
            o.report.get(metric).ok_or_else(|| {
                Error::invalid_input(format!("metric `{metric}` is not reported for this task"))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let ratios = outcomes
        .iter()
        .map(|o| {
            summarize_ncd(&o.trace, 0.1)
                .map(|s| s.median_early_grad_ratio)
                .unwrap_or(f64::NAN)
        })
        .collect();
    Ok(SideSummary {
        run_name: cfg.output.run_name.clone(),
        loss: cfg.loss.clone(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        values,
        median_early_grad_ratio: ratios,
    })
}

/// Paired comparison of two configs that may differ only in `[loss]` and
/// `[output]`.
pub fn compare_configs(
    a: &RunConfig,
    b: &RunConfig,
    base_a: &Path,
    base_b: &Path,
    seeds: SeedRange,
    metric: Option<&str>,
) -> Result<CompareReport> {
    let confounds = a.confounds(b);
    if !confounds.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "refusing to compare: configs differ outside [loss] in [{}]",
            confounds.join("], [")
        )));
    }
    if a.output.run_name == b.output.run_name
        && output_root(a) == output_root(b)
        && a.loss != b.loss
    {
        return Err(Error::invalid_config(
            "both configs write to the same output.run_name; give them distinct names",
        ));
    }
    let outcomes_a = train_seeds(a, base_a, seeds)?;
    let outcomes_b = if a == b {
        outcomes_a.clone()
    } else {
        train_seeds(b, base_b, seeds)?
    };
    let metric = metric
        .unwrap_or_else(|| default_metric(outcomes_a[0].report.task))
        .to_string();
    let side_a = side(a, &outcomes_a, &metric)?;
    let side_b = side(b, &outcomes_b, &metric)?;
    let (wilcoxon, wilcoxon_error) = match wilcoxon_signed_rank(&side_b.values, &side_a.values) {
        Ok(w) => (Some(w), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(CompareReport {
        metric,
        seeds: seeds.seeds().collect(),
        mean_difference: side_b.mean - side_a.mean,
        a: side_a,
        b: side_b,
        wilcoxon,
        wilcoxon_error,
    })
}

pub fn cmd_compare(args: &CompareArgs) -> Result<i32> {
    let a = RunConfig::load(&args.config_a)?;
    let b = RunConfig::load(&args.config_b)?;
    let report = compare_configs(
        &a,
        &b,
        &config_dir(&args.config_a),
        &config_dir(&args.config_b),
        args.seeds,
        args.metric.as_deref(),
    )?;

    let dir = output_root(&a).join(format!(
        "compare-{}-vs-{}",
        a.output.run_name, b.output.run_name
    ));
    fs::create_dir_all(&dir)?;
    write_json(&report, &dir.join("compare.json"))?;

    println!("metric: {}", report.metric);
    println!(
        "{:>6}  {:>12}  {:>12}  {:>10}",
        "seed", report.a.run_name, report.b.run_name, "b - a"
    );
    for (i, seed) in report.seeds.iter().enumerate() {
        let (x, y) = (report.a.values[i], report.b.values[i]);
        println!("{seed:>6}  {x:>12.4}  {y:>12.4}  {:>+10.4}", y - x);
    }
    println!(
        "{:>6}  {:>12.4}  {:>12.4}  {:>+10.4}",
        "mean", report.a.mean, report.b.mean, report.mean_difference
    );
    let median = |v: &[f64]| {
        let mut v: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            f64::NAN
        } else {
            v[v.len() / 2]
        }
    };
    println!(
        "early negative/positive gradient ratio (median over seeds): {} {:.4}, {} {:.4}",
        report.a.run_name,
        median(&report.a.median_early_grad_ratio),
        report.b.run_name,
        median(&report.b.median_early_grad_ratio)
    );
    match (&report.wilcoxon, &report.wilcoxon_error) {
        (Some(w), _) => println!(
            "wilcoxon: W = {}, n = {}, two-sided p = {:.6} ({:?})",
            w.statistic, w.n, w.p_value, w.method
        ),
        (None, Some(e)) => println!("wilcoxon: {e}"),
        _ => {}
    }
    println!("report: {}", dir.join("compare.json").display());
    Ok(0)
}
