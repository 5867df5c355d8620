//! Experiment orchestration: configs, seeded sweeps, result tables and the
//! command line.

pub mod cli;
mod config;
mod run;
mod spec;

pub use config::{ExperimentConfig, TraceFormat, OUT_DIR_ENV};
pub use run::{compare, run, run_traces, Aggregate, CompareTable, OptCache, RunResult, RunTable, CSV_HEADER};
pub use spec::{parse_grid, PolicyFactory, PolicyRegistry, PolicySpec, PredictorSpec};
