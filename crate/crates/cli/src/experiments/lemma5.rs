//! Concentration of the inverse final levels of order-`i` branches.

use kingman_core::exactdist::{binomial, expected_weight};
use kingman_core::sample_kingman;
use kingman_core::stats::{median, quantile_sorted, sorted_copy};

use super::{require, streams};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{Metric, Summary, Table};

/// `(n/ln n) Σ_A (1/J_A − E 1/J_A)²` and `√(n/ln n) max_A |1/J_A − E 1/J_A|`
/// over all sets of size `i`, with `1/J_A = 0` for unsupported sets.
fn statistics(n: usize, i: usize, mean: f64, final_levels: &[usize]) -> (f64, f64) {
    let unsupported = binomial(n, i) - final_levels.len() as f64;
    let mut sum = unsupported * mean * mean;
    let mut max: f64 = if unsupported > 0.5 { mean } else { 0.0 };
    for &j in final_levels {
        let d = 1.0 / j as f64 - mean;
        sum += d * d;
        max = max.max(d.abs());
    }
    let scale = n as f64 / (n as f64).ln();
    (scale * sum, scale.sqrt() * max)
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    require(!cfg.i.is_empty(), "lemma5 needs an order i")?;
    let mut metrics = Vec::new();
    let mut table = Table::new(
        "medians",
        &[
            "n",
            "i",
            "median_sum",
            "q10_sum",
            "q90_sum",
            "mean_sum",
            "median_max",
            "q10_max",
            "q90_max",
        ],
    );
    for &i in &cfg.i {
        let mut trend: Vec<(usize, f64, f64)> = Vec::new();
        for &n in &cfg.n {
            require(i >= 1 && i < n, format!("order {i} must be in 1..{n}"))?;
            let mean = expected_weight(n, i)? / 2.0;
            let stats: Vec<(f64, f64)> =
                streams(cfg)
                    .derive_index((n * 100 + i) as u64)
                    .map(cfg.reps, |rng, _| {
                        let tree = sample_kingman(n, rng).expect("validated n");
                        let levels: Vec<usize> = tree
                            .branch_summaries()
                            .into_iter()
                            .filter(|b| b.order == i)
                            .map(|b| b.final_level)
                            .collect();
                        statistics(n, i, mean, &levels)
                    });
            let sums = sorted_copy(&stats.iter().map(|s| s.0).collect::<Vec<_>>());
            let maxes = sorted_copy(&stats.iter().map(|s| s.1).collect::<Vec<_>>());
            let (med_sum, med_max) = (median(&sums), median(&maxes));
            metrics.push(
                Metric::info("median_sum", med_sum)
                    .with_target(1.0)
                    .at_n(n)
                    .at_i(i),
            );
            metrics.push(
                Metric::info("median_max", med_max)
                    .with_target(0.0)
                    .at_n(n)
                    .at_i(i),
            );
            metrics.push(
                Metric::bounded("min_sum", sums[0], 0.0, f64::INFINITY)
                    .at_n(n)
                    .at_i(i),
            );
            let mean_sum = sums.iter().sum::<f64>() / sums.len() as f64;
            table.push([
                n.to_string(),
                i.to_string(),
                med_sum.to_string(),
                quantile_sorted(&sums, 0.1).to_string(),
                quantile_sorted(&sums, 0.9).to_string(),
                mean_sum.to_string(),
                med_max.to_string(),
                quantile_sorted(&maxes, 0.1).to_string(),
                quantile_sorted(&maxes, 0.9).to_string(),
            ]);
            trend.push((n, med_sum, med_max));
        }
        let mut ordered = trend.clone();
        ordered.sort_by_key(|t| t.0);
        let sum_ok = ordered
            .windows(2)
            .all(|w| (w[1].1 - 1.0).abs() <= (w[0].1 - 1.0).abs());
        let max_ok = ordered.windows(2).all(|w| w[1].2 < w[0].2);
        metrics.push(Metric::flag("sum_median_approaches_one", sum_ok).at_i(i));
        metrics.push(Metric::flag("max_median_decreasing", max_ok).at_i(i));
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}
