//! Dice evaluation, report tables and the fusion ablation.

mod ablation;
mod metrics;
mod predict;
mod report;

pub use ablation::{ablate, ablation_csv, ablation_table, grid, AblationCell};
pub use metrics::{binarize, dice, mean_std, THRESHOLD};
pub use predict::{evaluate, predict, score, EVAL_BATCH};
pub use report::{cross_domain_table, EvalReport, ReportRow, SampleScore, FOOTER};
