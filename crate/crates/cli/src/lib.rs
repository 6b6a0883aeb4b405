//! Declarative experiment runner for the `plaplab` command.

pub mod config;
pub mod run;

pub use config::{parse_config, ExperimentConfig, Kind};
pub use run::{run, seed_stream, RunManifest};
