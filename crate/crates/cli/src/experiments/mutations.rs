//! Mutation counts by branch order against their exact moments.

use kingman_core::exactdist::beta_n;
use kingman_core::{sample_kingman, sprinkle_mutations, Accumulator};

use super::{require, streams};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{Metric, Summary, Table};

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    let phi = cfg.phi;
    let mut metrics = Vec::new();
    let mut table = Table::new(
        "orders",
        &[
            "n",
            "i",
            "mean",
            "mean_se",
            "variance",
            "variance_se",
            "target_mean",
        ],
    );
    for &n in &cfg.n {
        let orders = cfg.r.unwrap_or(5).min(n - 1);
        require(n >= 4, "mutation moments need n >= 4")?;
        let accs = streams(cfg).derive_index(n as u64).fold(
            cfg.reps,
            || vec![Accumulator::new(); orders],
            |accs, rng, _| {
                let tree = sample_kingman(n, rng).expect("validated n");
                let counts = sprinkle_mutations(&tree, phi, rng).expect("validated rate");
                for (acc, &c) in accs.iter_mut().zip(&counts) {
                    acc.push(c as f64);
                }
            },
            |a, b| a.iter_mut().zip(&b).for_each(|(x, y)| x.merge(y)),
        );
        for (k, acc) in accs.iter().enumerate() {
            let i = k + 1;
            let target = phi / i as f64;
            metrics.push(
                Metric::within_se("mean", acc.mean(), acc.stderr(), target, 3.0)
                    .at_n(n)
                    .at_i(i),
            );
            table.push([
                n.to_string(),
                i.to_string(),
                acc.mean().to_string(),
                acc.stderr().to_string(),
                acc.variance().to_string(),
                acc.variance_stderr().to_string(),
                target.to_string(),
            ]);
        }
        let m1 = &accs[0];
        let target = phi * phi * beta_n(n, 2) + phi;
        metrics.push(
            Metric::within_se("variance", m1.variance(), m1.variance_stderr(), target, 3.0)
                .at_n(n)
                .at_i(1),
        );
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn small_run_passes() {
        let mut cfg = ExperimentConfig::defaults(Experiment::Mutations);
        cfg.n = vec![20];
        cfg.reps = 5000;
        let s = run(&cfg).unwrap();
        assert!(s.passed, "{:?}", s.failures().collect::<Vec<_>>());
        assert_eq!(s.metric("mean").count(), 5);
    }
}
