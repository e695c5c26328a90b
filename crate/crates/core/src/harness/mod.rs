//! Experiment grids: configuration, execution with resumable results, and
//! reports over finished runs.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Reseed};
pub use report::{emit_report, read_table_csv, summarize, ReportFormat, Summary};
pub use run::{read_results, run_experiment, write_results, Metrics, RunResult, RunSpec, RunTimings};
