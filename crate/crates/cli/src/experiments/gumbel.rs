//! Location-scale Gumbel fit of the centered total tree length.

use kingman_core::exactdist::harmonic;
use kingman_core::stats::fit_gumbel;
use kingman_core::{sample_kingman, Accumulator};

use super::{require, streams};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::report::{Metric, Summary, Table};

/// Subsamples fitted separately to gauge the spread of the fitted scale.
const SPLITS: usize = 4;

pub(super) fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    let mut metrics = Vec::new();
    let mut table = Table::new(
        "fits",
        &["n", "subsample", "location", "scale", "ks_distance"],
    );
    for &n in &cfg.n {
        require(
            cfg.reps as usize >= 4 * SPLITS,
            "gumbel needs at least 16 replicates",
        )?;
        let lengths: Vec<f64> = streams(cfg).derive_index(n as u64).map(cfg.reps, |rng, _| {
            sample_kingman(n, rng).expect("validated n").total_length()
        });
        let acc = Accumulator::from_slice(&lengths);
        let expected = 2.0 * harmonic(n);
        metrics.push(
            Metric::within_se("mean_total_length", acc.mean(), acc.stderr(), expected, 3.0).at_n(n),
        );

        let centered: Vec<f64> = lengths.iter().map(|l| l - 2.0 * (n as f64).ln()).collect();
        let fit = fit_gumbel(&centered)?;
        metrics.push(Metric::info("location", fit.location).at_n(n));
        metrics.push(Metric::info("scale", fit.scale).at_n(n));
        metrics.push(
            Metric::bounded("ks_distance", fit.ks_distance, 0.0, 0.02)
                .soft()
                .at_n(n),
        );
        table.push([
            n.to_string(),
            "all".into(),
            fit.location.to_string(),
            fit.scale.to_string(),
            fit.ks_distance.to_string(),
        ]);

        let mut scales = Accumulator::new();
        let chunk = centered.len() / SPLITS;
        for (s, part) in centered.chunks(chunk).take(SPLITS).enumerate() {
            let f = fit_gumbel(part)?;
            scales.push(f.scale);
            table.push([
                n.to_string(),
                s.to_string(),
                f.location.to_string(),
                f.scale.to_string(),
                f.ks_distance.to_string(),
            ]);
        }
        // the full-sample scale should sit inside the spread of the subsample fits
        metrics.push(
            Metric::within_se(
                "scale_consistency",
                fit.scale,
                scales.stderr(),
                scales.mean(),
                3.0,
            )
            .soft()
            .at_n(n),
        );
    }
    Ok(Summary::new(cfg, metrics, vec![table]))
}
