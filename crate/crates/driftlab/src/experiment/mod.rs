//! Configuration-driven experiment pipelines.

mod config;
mod pipeline;

pub use config::{Experiment, ExperimentConfig, Format, GridConfig, Overrides};
pub use pipeline::{configure_threads, run, RunRecord, Stage, RECORD_FILE};
