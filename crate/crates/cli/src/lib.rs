//! Experiment runner for the `kingman` command.
//!
//! Each experiment takes an [`ExperimentConfig`], runs replicate-parallel
//! simulations with seeds derived from the master seed, and returns a
//! [`Summary`] of checked metrics plus plot-ready tables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::PathBuf;

pub use config::{Experiment, ExperimentConfig};
pub use error::{ConfigError, Result, RunError};
pub use report::{Metric, Summary, Table};

/// Runs an experiment, records the configuration text it came from and writes
/// the outputs when an output directory is configured.
pub fn execute(
    cfg: &ExperimentConfig,
    config_text: Option<&str>,
) -> Result<(Summary, Vec<PathBuf>)> {
    let mut summary = experiments::run(cfg)?;
    summary.config_text = config_text.map(str::to_string);
    let files = match &cfg.out {
        Some(dir) => summary.write(dir)?,
        None => Vec::new(),
    };
    Ok((summary, files))
}
