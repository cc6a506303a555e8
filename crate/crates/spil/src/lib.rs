//! Experiment harness for `spil-core`: TOML configs, parameter and curve
//! files, scenario scripts and the commands behind the `spil` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod curve;
pub mod error;
pub mod scenario_file;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
