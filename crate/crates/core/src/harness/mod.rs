// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-validation and the layer sweep that turns stores into curves.

mod folds;
mod runner;
mod task;

pub use folds::{
    group_folds, splits_from_assignment, stratified_folds, two_group_swap, FoldError, FoldKind, FoldScheme, Split,
};
pub use runner::{
    run_curves, threads_from_env, AggregateSpec, ExperimentSpec, HarnessError, LoadedExperiment, RunConfig, RunResults,
    SkippedTask, THREADS_ENV,
};
pub use task::{evaluate_task, task_seed, FoldResult, ProbeTask, Standardization, TaskError, TaskId, TaskResult};
