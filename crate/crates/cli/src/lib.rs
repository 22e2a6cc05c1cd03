//! Experiment runner for the stochastic-PDE surrogates in `spdebnn_core`.
//!
//! [`pipeline::run`] executes one experiment end to end from an
//! [`config::ExperimentConfig`]; [`report::report`] compares finished runs;
//! [`checks`] holds the gradient and reversibility self-checks.

pub mod checks;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, Preset, Scale};
pub use error::{CliError, Result, Stage};
pub use pipeline::{run, RunSummary};
pub use spdebnn_core as core;
