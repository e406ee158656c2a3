//! Evaluation measures and the paired significance test.
//!
//! Every function here is pure and breaks ties towards the lowest index, so
//! results depend only on the inputs.

mod classify;
mod ranking;
mod report;
mod retrieval;
mod wilcoxon;

pub use classify::{balanced_accuracy, top1_accuracy, top_t, BalancedAccuracy};
pub use ranking::{average_precision, multilabel_report, rank_descending, MultilabelReport};
pub use report::{EvalReport, Task};
pub use retrieval::{retrieval_eval, DistanceMetric, RetrievalResult};
pub use wilcoxon::{
    wilcoxon_exact, wilcoxon_normal, wilcoxon_signed_rank, WilcoxonMethod, WilcoxonResult,
    EXACT_MAX_N,
};
