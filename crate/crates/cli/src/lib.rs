//! Library half of the `bran` command line tool.
//!
//! The binary is a thin wrapper over [`config`] (file + flag + environment
//! resolution) and [`experiment`] (mode runners producing [`output::Table`]
//! data that serializes to deterministic CSV or JSON).

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{parse_config, ConfigError, ExperimentConfig, Mode};
pub use experiment::{run_experiment, RunError};
