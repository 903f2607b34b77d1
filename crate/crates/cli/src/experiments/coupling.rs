//! Pathwise checks of the family-size coupling and the disagreement rate.

use kingman_core::{disagreement_probability, simulate_coupled_family};

use super::{require, single_h, streams};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{Metric, Summary, Table};

#[derive(Default)]
struct Tally {
    traces: u64,
    violations: u64,
    before_fill: u64,
    max_theta_ratio: f64,
    first: Option<String>,
}

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    let h = single_h(cfg)?;
    require(
        cfg.subfamily >= 1 && cfg.subfamily <= cfg.family,
        "need 1 <= subfamily <= family",
    )?;
    let mut metrics = Vec::new();
    let mut traces = Table::new(
        "traces",
        &["n", "i", "traces", "h_before_fill", "violations"],
    );
    let mut decay = Table::new(
        "disagreement",
        &["n", "family", "subfamily", "h", "estimate", "stderr"],
    );

    for &n in &cfg.n {
        for &i in &cfg.i {
            require(
                i >= 1 && i < n,
                format!("family size {i} must be in 1..{n}"),
            )?;
            let stream = streams(cfg)
                .derive("traces")
                .derive_index((n * 1000 + i) as u64);
            let tally = stream.fold(
                cfg.trace_reps,
                Tally::default,
                |t, rng, idx| {
                    let trace = simulate_coupled_family(n, i, h, rng).expect("validated family");
                    let errors = trace.verify();
                    t.traces += 1;
                    if trace.tau.is_none_or(|tau| h <= tau) {
                        t.before_fill += 1;
                    }
                    if h > 0.0 {
                        t.max_theta_ratio = t.max_theta_ratio.max(trace.theta_h / h);
                    }
                    if !errors.is_empty() {
                        t.violations += 1;
                        t.first
                            .get_or_insert_with(|| format!("replicate {idx}: {}", errors[0]));
                    }
                },
                |a, b| {
                    a.traces += b.traces;
                    a.violations += b.violations;
                    a.before_fill += b.before_fill;
                    a.max_theta_ratio = a.max_theta_ratio.max(b.max_theta_ratio);
                    if a.first.is_none() {
                        a.first = b.first;
                    }
                },
            );
            if let Some(msg) = &tally.first {
                eprintln!("coupling n={n} i={i}: {msg}");
            }
            metrics.push(
                Metric::bounded("violations", tally.violations as f64, 0.0, 0.0)
                    .at_n(n)
                    .at_h(h)
                    .at_i(i),
            );
            metrics.push(
                Metric::bounded("max_theta_over_h", tally.max_theta_ratio, 0.0, 1.0 - 1e-15)
                    .at_n(n)
                    .at_h(h)
                    .at_i(i),
            );
            metrics.push(
                Metric::info("traces_before_fill", tally.before_fill as f64)
                    .at_n(n)
                    .at_h(h)
                    .at_i(i),
            );
            traces.push([
                n,
                i,
                tally.traces as usize,
                tally.before_fill as usize,
                tally.violations as usize,
            ]);
        }
    }

    let mut estimates = Vec::new();
    for &n in &cfg.n {
        let seed = streams(cfg)
            .derive("disagreement")
            .derive_index(n as u64)
            .key();
        let est =
            disagreement_probability(n, cfg.family, cfg.subfamily, cfg.decay_h, cfg.reps, seed)?;
        metrics.push(
            Metric::info("disagreement", est.value)
                .with_stderr(est.stderr)
                .at_n(n)
                .at_h(cfg.decay_h)
                .at_i(cfg.family),
        );
        decay.push([
            n.to_string(),
            cfg.family.to_string(),
            cfg.subfamily.to_string(),
            cfg.decay_h.to_string(),
            est.value.to_string(),
            est.stderr.to_string(),
        ]);
        estimates.push((n, est));
    }
    if let (Some(&(n0, a)), Some(&(n1, b))) = (estimates.first(), estimates.last()) {
        if n1 > n0 {
            let ratio = a.value / b.value;
            let rel = ((a.stderr / a.value).powi(2) + (b.stderr / b.value).powi(2)).sqrt();
            let scale = n1 as f64 / n0 as f64;
            // 1/n decay gives ratio n1/n0; accept a band around it
            metrics.push(
                Metric::bounded("disagreement_ratio", ratio, 0.625 * scale, 1.625 * scale)
                    .with_target(scale)
                    .with_stderr(ratio * rel)
                    .at_i(cfg.family),
            );
        }
    }
    Ok(Summary::new(cfg, metrics, vec![traces, decay]))
}
