//! Command-line front end and the experiment harness behind it.

mod commands;
mod config;
mod experiment;

pub use commands::{
    compare_configs, exit_code, run_cli, Cli, Command, CompareReport, SeedRange, SideSummary,
    GRAD_CHECK_TOLERANCE, OUTPUT_ROOT_ENV,
};
pub use config::{
    DataConfig, EvalConfig, EvalData, ModelConfig, OutputConfig, Precision, PreparedData,
    RunConfig, TrainingConfig,
};
pub use experiment::{evaluate_labeled, evaluate_retrieval, run_seed, RunOutcome};
