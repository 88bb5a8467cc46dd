//! Experiment harness around the `qrcal` library: configs, dataset
//! resolution, the train/recalibrate/sweep/report verbs and their CSV output.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod output;
pub mod report;

pub use commands::{run, Cli};
pub use config::ExperimentConfig;
pub use error::CliError;
