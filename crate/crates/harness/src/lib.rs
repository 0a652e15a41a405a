//! Experiment harness: configuration, the seven experiment kinds, and their outputs.

pub mod config;
pub mod experiments;
pub mod oracles;
pub mod output;
pub mod runner;

pub use config::{parse_config, ConfigError, ExperimentConfig, Kind, Settings};
pub use output::{CriterionResult, RunManifest, Table};
pub use runner::run_experiment;
