//! Small-n oracle against the closed-form laws.

use kingman_core::exactdist::{self, binomial, fu_moments, level_pmf_j, level_pmf_kj};
use kingman_core::oracle::{self, to_f64, MAX_N};

use super::require;
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{Metric, Summary, Table};

const TOL: f64 = 1e-10;

pub(super) fn levels(cfg: &ExperimentConfig) -> Result<Summary> {
    require(
        cfg.n.iter().all(|&n| n <= MAX_N),
        format!("exact laws need n <= {MAX_N}"),
    )?;
    let mut metrics = Vec::new();
    let mut table = Table::new(
        "deltas",
        &["n", "i", "k", "j", "oracle", "closed_form", "delta"],
    );
    for &n in &cfg.n {
        for i in 1..n {
            let dist = oracle::exact_level_distribution(n, i)?;
            let mut worst_j: f64 = 0.0;
            for j in 1..n {
                let exact = to_f64(dist.final_level(j));
                let closed = level_pmf_j(n, i, j)?;
                worst_j = worst_j.max((exact - closed).abs());
                table.push([
                    n.to_string(),
                    i.to_string(),
                    String::new(),
                    j.to_string(),
                    exact.to_string(),
                    closed.to_string(),
                    (exact - closed).to_string(),
                ]);
            }
            metrics.push(
                Metric::bounded("final_level_max_delta", worst_j, 0.0, TOL)
                    .at_n(n)
                    .at_i(i),
            );
            if i >= 2 {
                let mut worst_kj: f64 = 0.0;
                for j in 1..n {
                    for k in j + 1..=n {
                        let exact = to_f64(dist.joint(k, j));
                        let closed = level_pmf_kj(n, i, k, j)?;
                        worst_kj = worst_kj.max((exact - closed).abs());
                        table.push([n, i, k, j].map(|v| v.to_string()).into_iter().chain([
                            exact.to_string(),
                            closed.to_string(),
                            (exact - closed).to_string(),
                        ]));
                    }
                }
                metrics.push(
                    Metric::bounded("joint_level_max_delta", worst_kj, 0.0, TOL)
                        .at_n(n)
                        .at_i(i),
                );
            }
            let moments = oracle::exact_order_length_moments(n, i, None)?;
            metrics.push(
                Metric::near(
                    "order_length_mean",
                    to_f64(moments.mean),
                    exactdist::eta(i),
                    TOL,
                )
                .at_n(n)
                .at_i(i),
            );
            let branch = to_f64(oracle::exact_branch_length_mean(n, i)?);
            metrics.push(
                Metric::near(
                    "branch_length_mean",
                    branch,
                    exactdist::eta(i) / binomial(n, i),
                    TOL,
                )
                .at_n(n)
                .at_i(i),
            );
        }
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}

pub(super) fn fu(cfg: &ExperimentConfig) -> Result<Summary> {
    require(
        cfg.n.iter().all(|&n| n <= MAX_N),
        format!("exact laws need n <= {MAX_N}"),
    )?;
    let mut metrics = Vec::new();
    let mut table = Table::new(
        "moments",
        &["n", "i", "other", "oracle", "closed_form", "delta"],
    );
    for &n in &cfg.n {
        for i in (1..n).filter(|&i| 2 * i < n) {
            let exact = to_f64(oracle::exact_order_length_moments(n, i, None)?.variance);
            let closed = fu_moments(n, i, None)?.variance;
            metrics.push(Metric::near("variance", exact, closed, TOL).at_n(n).at_i(i));
            table.push([
                n.to_string(),
                i.to_string(),
                String::new(),
                exact.to_string(),
                closed.to_string(),
                (exact - closed).to_string(),
            ]);
            for other in 1..i {
                let Ok(fu) = fu_moments(n, i, Some(other)) else {
                    continue;
                };
                let closed = fu.covariance.unwrap_or(f64::NAN);
                let exact = oracle::exact_order_length_moments(n, i, Some(other))?
                    .covariance
                    .map_or(f64::NAN, to_f64);
                metrics.push(
                    Metric::near(&format!("covariance_with_{other}"), exact, closed, TOL)
                        .at_n(n)
                        .at_i(i),
                );
                table.push([n, i, other].map(|v| v.to_string()).into_iter().chain([
                    exact.to_string(),
                    closed.to_string(),
                    (exact - closed).to_string(),
                ]));
            }
        }
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}
