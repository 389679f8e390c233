//! Training loops, evaluation protocol and experiment grids.

mod config;
mod eval;
mod experiment;
mod loops;

pub use config::{Ablation, ExperimentConfig, Method, TrainConfig};
pub use eval::{evaluate, format_table, read_report_csv, write_report_csv, ExperimentReport, ReportRow, RunSummary};
pub use experiment::{
    build_world, compare_arms, main_arms, prepare_run, run_ablation_grid, run_arm, run_seed, run_sl_sweep, Arm, Comparison,
    PipelineData, RunOutcome,
};
pub use loops::{
    exact_match_rate, policy_spec, train_banditmatch, train_baseline, train_logging_policy, train_method, StepLog, ThresholdLog,
    TrainLog, TrainOptions,
};
