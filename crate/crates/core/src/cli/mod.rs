//! Run configuration, commands, and reports.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{cmd_bench, cmd_eval, cmd_inspect, cmd_train, load_data, with_threads, EvalRequest};
pub use config::RunConfig;
pub use report::{BenchReport, RunReport};
