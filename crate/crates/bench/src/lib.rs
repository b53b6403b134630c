//! Experiment harness for the active classification algorithms.

pub mod config;
pub mod ingest;
pub mod plotdata;
pub mod run;
pub mod stdin_labels;

pub use config::ExperimentConfig;
pub use run::{run_experiment, write_outputs, Labels, ResultRow, RunOutcome};
