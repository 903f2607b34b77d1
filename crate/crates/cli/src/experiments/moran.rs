//! Experiments on the evolving genealogy: pathwise decomposition, stationarity
//! of the external length and its covariance across time.

use kingman_core::exactdist::{cov_target, normalized_variance};
use kingman_core::stats::lag_covariance;
use kingman_core::{normalize, Accumulator, EvolvingState, LagGrid};

use super::{require, single_h, streams};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{Metric, Summary, Table};

/// Orders whose freed proportions are tabulated.
const SHOWN_ORDERS: usize = 5;

/// Absolute tolerance on the trimmed correlation at the largest `n`.
const CORRELATION_TOL: f64 = 0.10;

struct DecompositionTally {
    worst: f64,
    accrued: Accumulator,
    external: Accumulator,
    proportions: Vec<Accumulator>,
}

pub(super) fn decomposition(cfg: &ExperimentConfig) -> Result<Summary> {
    let h = single_h(cfg)?;
    let mut metrics = Vec::new();
    let mut table = Table::new(
        "proportions",
        &["n", "h", "order", "mean_proportion", "stderr"],
    );
    for &n in &cfg.n {
        let shown = SHOWN_ORDERS.min(n - 1);
        let tally = streams(cfg).derive_index(n as u64).fold(
            cfg.reps,
            || DecompositionTally {
                worst: 0.0,
                accrued: Accumulator::new(),
                external: Accumulator::new(),
                proportions: vec![Accumulator::new(); shown],
            },
            |t, rng, _| {
                let mut state = EvolvingState::init_stationary(n, rng).expect("validated n");
                state.advance(h, rng);
                let report = state.decompose(None);
                t.worst = t.worst.max(report.relative_residual());
                t.accrued.push(report.accrued_external_length);
                t.external.push(report.external_length);
                for (acc, o) in t.proportions.iter_mut().zip(&report.orders) {
                    acc.push(o.proportion);
                }
            },
            |a, b| {
                a.worst = a.worst.max(b.worst);
                a.accrued.merge(&b.accrued);
                a.external.merge(&b.external);
                a.proportions
                    .iter_mut()
                    .zip(&b.proportions)
                    .for_each(|(x, y)| x.merge(y));
            },
        );
        metrics.push(
            Metric::bounded("max_relative_residual", tally.worst, 0.0, 1e-9)
                .at_n(n)
                .at_h(h),
        );
        metrics.push(
            Metric::bounded("mean_accrued_external_length", tally.accrued.mean(), 0.0, h)
                .with_stderr(tally.accrued.stderr())
                .at_n(n)
                .at_h(h),
        );
        metrics.push(
            Metric::info("mean_external_length", tally.external.mean())
                .with_stderr(tally.external.stderr())
                .at_n(n)
                .at_h(h),
        );
        for (k, acc) in tally.proportions.iter().enumerate() {
            table.push([
                n.to_string(),
                h.to_string(),
                (k + 1).to_string(),
                acc.mean().to_string(),
                acc.stderr().to_string(),
            ]);
        }
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}

/// Times `{0} ∪ lags`, checked to be increasing.
fn grid_times(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    require(!cfg.lags.is_empty(), "need at least one lag")?;
    require(cfg.lags.iter().all(|&l| l > 0.0), "lags must be positive")?;
    require(
        cfg.lags.windows(2).all(|w| w[0] < w[1]),
        "lags must be strictly increasing",
    )?;
    Ok(std::iter::once(0.0)
        .chain(cfg.lags.iter().copied())
        .collect())
}

/// External length at each of `times`, one row per replicate.
fn external_paths(cfg: &ExperimentConfig, n: usize, times: &[f64]) -> Vec<Vec<f64>> {
    streams(cfg).derive_index(n as u64).map(cfg.reps, |rng, _| {
        let mut state = EvolvingState::init_stationary(n, rng).expect("validated n");
        let mut now = 0.0;
        times
            .iter()
            .map(|&t| {
                state.advance(t - now, rng);
                now = t;
                state.external_length()
            })
            .collect()
    })
}

pub(super) fn stationarity(cfg: &ExperimentConfig) -> Result<Summary> {
    let times = grid_times(cfg)?;
    let mut metrics = Vec::new();
    let mut table = Table::new("means", &["n", "h", "mean", "stderr", "variance"]);
    for &n in &cfg.n {
        let rows = external_paths(cfg, n, &times);
        for (c, &t) in times.iter().enumerate() {
            let acc = Accumulator::from_slice(&rows.iter().map(|r| r[c]).collect::<Vec<_>>());
            metrics.push(
                Metric::within_se("mean_external_length", acc.mean(), acc.stderr(), 2.0, 3.0)
                    .at_n(n)
                    .at_h(t),
            );
            table.push([
                n.to_string(),
                t.to_string(),
                acc.mean().to_string(),
                acc.stderr().to_string(),
                acc.variance().to_string(),
            ]);
        }
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}

pub(super) fn covariance(cfg: &ExperimentConfig) -> Result<Summary> {
    let times = grid_times(cfg)?;
    let largest = *cfg.n.iter().max().expect("validated non-empty");
    let mut metrics = Vec::new();
    let mut table = Table::new(
        "lags",
        &[
            "n",
            "lag",
            "covariance",
            "covariance_se",
            "correlation",
            "correlation_se",
            "trimmed_correlation",
            "trimmed_se",
            "target",
        ],
    );
    // |trimmed correlation − target| per n, by lag
    let mut deviations: Vec<(usize, Vec<f64>)> = Vec::new();
    for &n in &cfg.n {
        let rows = external_paths(cfg, n, &times);
        let mut grid = LagGrid::new(cfg.lags.clone())?;
        for row in rows {
            grid.push(row.into_iter().map(|x| normalize(n, x)).collect())?;
        }
        let base = Accumulator::from_slice(&grid.column(0));
        metrics.push(
            Metric::within_se(
                "normalized_variance",
                base.variance(),
                base.variance_stderr(),
                normalized_variance(n),
                3.0,
            )
            .at_n(n)
            .at_h(0.0),
        );
        metrics.push(
            Metric::info("normalized_mean", base.mean())
                .with_stderr(base.stderr())
                .at_n(n)
                .at_h(0.0),
        );
        let mut devs = Vec::new();
        for lc in lag_covariance(&grid, cfg.trim)? {
            let target = cov_target(lc.lag);
            let trimmed = lc.trimmed_correlation.unwrap_or(f64::NAN);
            let check = Metric::near("trimmed_correlation", trimmed, target, CORRELATION_TOL)
                .with_stderr(lc.trimmed_se)
                .at_n(n)
                .at_h(lc.lag);
            metrics.push(if n == largest { check } else { check.soft() });
            metrics.push(
                Metric::info("correlation", lc.correlation.unwrap_or(f64::NAN))
                    .with_stderr(lc.correlation_se)
                    .with_target(target)
                    .at_n(n)
                    .at_h(lc.lag),
            );
            metrics.push(
                Metric::info("covariance", lc.covariance)
                    .with_stderr(lc.covariance_se)
                    .with_target(target)
                    .at_n(n)
                    .at_h(lc.lag),
            );
            devs.push((trimmed - target).abs());
            table.push([
                n.to_string(),
                lc.lag.to_string(),
                lc.covariance.to_string(),
                lc.covariance_se.to_string(),
                lc.correlation.unwrap_or(f64::NAN).to_string(),
                lc.correlation_se.to_string(),
                trimmed.to_string(),
                lc.trimmed_se.to_string(),
                target.to_string(),
            ]);
        }
        deviations.push((n, devs));
    }
    if let (Some((n0, first)), Some((n1, last))) = (deviations.first(), deviations.last()) {
        if n1 > n0 {
            let improving = first.iter().zip(last).filter(|(a, b)| b <= a).count();
            let lags = first.len();
            let needed = lags.saturating_sub(1).max(1);
            metrics.push(Metric::bounded(
                "lags_with_shrinking_deviation",
                improving as f64,
                needed as f64,
                lags as f64,
            ));
        }
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}
