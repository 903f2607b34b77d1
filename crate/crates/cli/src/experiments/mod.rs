//! One module per subcommand. Each takes a resolved configuration and returns
//! its metrics and tables.

mod birthdeath;
mod coupling;
mod exact;
mod gumbel;
mod iterm;
mod lemma5;
mod moran;
mod mutations;
mod thinned;

use kingman_core::SeedStream;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{ConfigError, Result};
use crate::report::Summary;

/// Runs the configured experiment on a worker pool of the configured size.
pub fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()?;
    pool.install(|| dispatch(cfg))
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Summary> {
    match cfg.experiment {
        Experiment::LevelsExact => exact::levels(cfg),
        Experiment::FuExact => exact::fu(cfg),
        Experiment::Bd => birthdeath::run(cfg),
        Experiment::Coupling => coupling::run(cfg),
        Experiment::Decomposition => moran::decomposition(cfg),
        Experiment::Stationarity => moran::stationarity(cfg),
        Experiment::Covariance => moran::covariance(cfg),
        Experiment::ThinnedSum => thinned::run(cfg),
        Experiment::Lemma5 => lemma5::run(cfg),
        Experiment::Iterm => iterm::run(cfg),
        Experiment::Mutations => mutations::run(cfg),
        Experiment::Gumbel => gumbel::run(cfg),
    }
}

/// Seed family for one experiment, so experiments sharing a master seed do
/// not share streams.
fn streams(cfg: &ExperimentConfig) -> SeedStream {
    SeedStream::new(cfg.seed).derive(cfg.experiment.name())
}

/// The single time `h` of experiments that use one.
fn single_h(cfg: &ExperimentConfig) -> Result<f64> {
    match cfg.lags.as_slice() {
        [h] => Ok(*h),
        other => Err(ConfigError::Invalid(format!(
            "{} needs exactly one time h, got {other:?}",
            cfg.experiment
        ))
        .into()),
    }
}

fn require(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::Invalid(msg.into()).into())
    }
}
