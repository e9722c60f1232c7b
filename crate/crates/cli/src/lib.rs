//! Configuration and orchestration behind the `abcaw` command line tool.

pub mod config;
pub mod error;
pub mod experiment;

pub use config::{resolve_config, ExperimentConfig, ModelConfig, Resolution};
pub use error::CliError;
pub use experiment::{run_experiment, summarize, ExperimentOptions, ExperimentOutcome};
