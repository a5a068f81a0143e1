//! Experiment runner for generative adversarial ensembles: configuration,
//! the `gen-data`, `train`, `eval` and `compare` verbs, and SVG plots.

pub mod commands;
pub mod config;
pub mod svg;

pub use commands::{compare, eval, gen_data, train, EvalOptions, MetricRow, RunSummary};
pub use config::ExperimentConfig;
