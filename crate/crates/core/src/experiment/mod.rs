//! Configured end-to-end experiments: full-order run, basis, training, reduced run, diagnostics.

mod config;
mod pipeline;
mod presets;

pub use config::{ExperimentConfig, ModelSpec, OUT_ENV};
pub use pipeline::{files, operator_params, Artifact, Manifest, Pipeline, RomRuns, Summary, TrainedModels, STAGES};
pub use presets::InitialCondition;
