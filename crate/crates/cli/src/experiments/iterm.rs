//! Scaling of the variance of the external length accrued after time 0.

use kingman_core::{Accumulator, EvolvingState};

use super::{single_h, streams};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{Metric, Summary, Table};

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    let h = single_h(cfg)?;
    let mut metrics = Vec::new();
    let mut table = Table::new(
        "scaled_variance",
        &["n", "h", "mean", "variance", "n_variance", "n_variance_se"],
    );
    let mut scaled = Vec::new();
    for &n in &cfg.n {
        let acc = streams(cfg).derive_index(n as u64).fold(
            cfg.reps,
            Accumulator::new,
            |acc, rng, _| {
                let mut state = EvolvingState::init_stationary(n, rng).expect("validated n");
                state.advance(h, rng);
                acc.push(state.accrued_external_length());
            },
            |a, b| a.merge(&b),
        );
        let nf = n as f64;
        let (nv, nv_se) = (nf * acc.variance(), nf * acc.variance_stderr());
        metrics.push(
            Metric::bounded("mean_accrued", acc.mean(), 0.0, h)
                .with_stderr(acc.stderr())
                .at_n(n)
                .at_h(h),
        );
        metrics.push(
            Metric::info("scaled_variance", nv)
                .with_stderr(nv_se)
                .at_n(n)
                .at_h(h),
        );
        table.push([
            n.to_string(),
            h.to_string(),
            acc.mean().to_string(),
            acc.variance().to_string(),
            nv.to_string(),
            nv_se.to_string(),
        ]);
        scaled.push((n, nv, nv_se));
    }
    if let (Some(&(n0, a, sa)), Some(&(n1, b, sb))) = (scaled.first(), scaled.last()) {
        if n1 != n0 {
            let ratio = a / b;
            let se = ratio * ((sa / a).powi(2) + (sb / b).powi(2)).sqrt();
            metrics.push(
                Metric::bounded("scaled_variance_ratio", ratio, 0.3, 3.0)
                    .with_stderr(se)
                    .with_target(1.0)
                    .at_h(h),
            );
        }
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}
