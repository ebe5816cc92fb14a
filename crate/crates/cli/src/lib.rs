//! Configuration-driven front end: generate data, run experiments, render
//! reports from run journals.

pub mod commands;
pub mod config;
pub mod error;
pub mod journal;

pub use commands::{cmd_gen_data, cmd_report, cmd_run, configure_threads, load_data, LoadedData, RunSummary, THREADS_ENV};
pub use config::RunConfig;
pub use error::{CliError, Result};
