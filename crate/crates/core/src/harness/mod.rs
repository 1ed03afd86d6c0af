//! Experiment runner, CSV output, randomized verification and the CLI.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod verify;

pub use config::{ConfigOverrides, ExperimentConfig, SystemId};
pub use experiment::{
    relative_error, run_experiment, write_csv, ComparisonReport, Experiment, StepRecord,
};
