//! Experiment driver over the multipass core: config parsing, the four
//! commands (propagate, sweep, estimate, suggest-n), and their report
//! formats. The binary in main.rs is a thin argument-parsing shell; all
//! behavior lives here so tests can call it directly.

pub mod config;
pub mod run;

pub use config::{ExperimentConfig, Overrides};
pub use run::AppError;
