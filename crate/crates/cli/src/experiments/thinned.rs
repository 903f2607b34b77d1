//! Sums of branch weights thinned by independent single-survivor indicators.

use kingman_core::birthdeath::single_survivor_probability;
use kingman_core::exactdist::{expected_weight, thinned_target};
use kingman_core::stats::{normality_diagnostics, trim_sample, trimmed_normal_excess_kurtosis};
use kingman_core::{normalize, sample_kingman, Accumulator};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};

use super::{require, single_h, streams};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{Metric, Summary, Table};

const SKEW_TOL: f64 = 0.15;
const KURTOSIS_TOL: f64 = 0.4;
const RATIO_TOL: f64 = 0.15;

/// `C(n, k)` when it fits in 128 bits.
fn exact_binomial(n: usize, k: usize) -> Option<u128> {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for t in 0..k {
        // c · (n − t) is divisible by t + 1 at every step
        c = c.checked_mul((n - t) as u128)? / (t as u128 + 1);
    }
    Some(c)
}

/// Number of successes among `trials` Bernoulli(`p`) draws, normal-approximated
/// once the count exceeds 64 bits.
fn draw_successes<R: Rng + ?Sized>(trials: u128, p: f64, rng: &mut R) -> f64 {
    if let Ok(t) = u64::try_from(trials) {
        Binomial::new(t, p).expect("valid probability").sample(rng) as f64
    } else {
        let t = trials as f64;
        let sd = (t * p * (1.0 - p)).sqrt();
        Normal::new(t * p, sd).expect("finite moments").sample(rng)
    }
}

struct Order {
    p: f64,
    /// `E[2/J_A]` for one set of this order.
    weight: f64,
    sets: u128,
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    let h = single_h(cfg)?;
    require(h > 0.0, "thinned sums need h > 0")?;
    let r = cfg.r.unwrap_or(12);
    let mut metrics = Vec::new();
    let mut table = Table::new(
        "samples",
        &[
            "n",
            "replicate",
            "thinned_sum",
            "normalized_external_length",
        ],
    );
    for &n in &cfg.n {
        require(r < n, format!("order cutoff {r} must be below n = {n}"))?;
        let orders: Vec<Order> = (1..=r)
            .map(|i| -> Result<Order> {
                Ok(Order {
                    p: single_survivor_probability(i, h),
                    weight: expected_weight(n, i)?,
                    sets: exact_binomial(n, i).unwrap_or(u128::MAX),
                })
            })
            .collect::<Result<_>>()?;
        let scale = (n as f64 / (4.0 * (n as f64).ln())).sqrt();
        let samples: Vec<(f64, f64)> =
            streams(cfg).derive_index(n as u64).map(cfg.reps, |rng, _| {
                let tree = sample_kingman(n, rng).expect("validated n");
                let mut supported = vec![0u128; r];
                let mut sum = 0.0;
                for b in tree.branch_summaries().into_iter().filter(|b| b.order <= r) {
                    supported[b.order - 1] += 1;
                    let o = &orders[b.order - 1];
                    if rng.random_bool(o.p) {
                        sum += 2.0 / b.final_level as f64 - o.weight;
                    }
                }
                for (o, &s) in orders.iter().zip(&supported) {
                    sum -= o.weight * draw_successes(o.sets - s, o.p, rng);
                }
                (scale * sum, normalize(n, tree.external_length()))
            });
        let sums: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let baseline = Accumulator::from_slice(&samples.iter().map(|s| s.1).collect::<Vec<_>>());
        let acc = Accumulator::from_slice(&sums);
        let target = thinned_target(r, h);

        let trimmed = trim_sample(&sums, cfg.trim);
        let tacc = Accumulator::from_slice(&trimmed);
        let reference = trimmed_normal_excess_kurtosis(cfg.trim)?;
        metrics.push(
            Metric::near("trimmed_skewness", tacc.skewness(), 0.0, SKEW_TOL)
                .at_n(n)
                .at_h(h),
        );
        metrics.push(
            Metric::near(
                "trimmed_excess_kurtosis",
                tacc.excess_kurtosis() - reference,
                0.0,
                KURTOSIS_TOL,
            )
            .at_n(n)
            .at_h(h),
        );
        metrics.push(
            Metric::info("trimmed_variance", tacc.variance())
                .at_n(n)
                .at_h(h),
        );
        let diag = normality_diagnostics(&sums)?;
        metrics.push(Metric::info("skewness", diag.skewness).at_n(n).at_h(h));
        metrics.push(
            Metric::info("excess_kurtosis", diag.excess_kurtosis)
                .at_n(n)
                .at_h(h),
        );
        metrics.push(
            Metric::info("ks_distance", diag.ks_distance)
                .at_n(n)
                .at_h(h),
        );
        metrics.push(
            Metric::info("mean", acc.mean())
                .with_stderr(acc.stderr())
                .with_target(0.0)
                .at_n(n)
                .at_h(h),
        );
        metrics.push(
            Metric::info("variance", acc.variance())
                .with_stderr(acc.variance_stderr())
                .with_target(target)
                .at_n(n)
                .at_h(h),
        );

        // finite-n inflation of the external-length variance over its limit 1
        let inflation = baseline.variance();
        metrics.push(
            Metric::info("baseline_variance_ratio", inflation)
                .with_stderr(baseline.variance_stderr())
                .at_n(n),
        );
        let ratio = acc.variance() / target / inflation;
        let ratio_se = ratio
            * ((acc.variance_stderr() / acc.variance()).powi(2)
                + (baseline.variance_stderr() / inflation).powi(2))
            .sqrt();
        metrics.push(
            Metric::near("adjusted_variance_ratio", ratio, 1.0, RATIO_TOL)
                .with_stderr(ratio_se)
                .at_n(n)
                .at_h(h),
        );

        for (idx, (s, x)) in samples.iter().enumerate() {
            table.push([n.to_string(), idx.to_string(), s.to_string(), x.to_string()]);
        }
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}
