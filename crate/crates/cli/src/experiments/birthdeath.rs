//! Simulated critical birth–death paths against the exact law.

use kingman_core::{bd_pmf, simulate_bd, Accumulator};

use super::{require, single_h, streams};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{Metric, Summary, Table};

/// Largest state tallied individually.
const TALLY: usize = 64;

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    let h = single_h(cfg)?;
    require(
        !cfg.i.is_empty() && cfg.i.iter().all(|&i| i >= 1),
        "bd needs ancestor counts i >= 1",
    )?;
    let mut metrics = Vec::new();
    let mut table = Table::new("pmf", &["i", "k", "count", "empirical", "exact"]);
    for &i in &cfg.i {
        let (counts, mean) = streams(cfg).derive_index(i as u64).fold(
            cfg.reps,
            || (vec![0u64; TALLY + 1], Accumulator::new()),
            |(counts, acc), rng, _| {
                let b = simulate_bd(i as u64, h, rng);
                counts[(b as usize).min(TALLY)] += 1;
                acc.push(b as f64);
            },
            |a, b| {
                a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
                a.1.merge(&b.1);
            },
        );
        let pmf = bd_pmf(i, h, None)?;
        let reps = cfg.reps as f64;
        for (k, &hits) in counts.iter().enumerate().take(2) {
            let p = pmf.prob(k);
            let p_hat = hits as f64 / reps;
            let se = (p * (1.0 - p) / reps).sqrt();
            metrics.push(
                Metric::within_se(&format!("p_hat_{k}"), p_hat, se, p, 3.0)
                    .at_h(h)
                    .at_i(i),
            );
        }
        metrics.push(
            Metric::within_se("mean", mean.mean(), mean.stderr(), i as f64, 3.0)
                .at_h(h)
                .at_i(i),
        );
        let missing = (1.0 - pmf.mass()).abs().max(pmf.tail_bound);
        metrics.push(
            Metric::bounded("truncation_mass_error", missing, 0.0, 1e-9)
                .at_h(h)
                .at_i(i),
        );
        for (k, &c) in counts.iter().enumerate().take(TALLY) {
            if c == 0 && pmf.prob(k) < 1e-7 {
                continue;
            }
            table.push([
                i.to_string(),
                k.to_string(),
                c.to_string(),
                (c as f64 / reps).to_string(),
                pmf.prob(k).to_string(),
            ]);
        }
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}
