//! Acceptance run: every criterion at full scale, one PASS/FAIL line each.
//!
//! The process exits non-zero on failure only when `KINGMAN_ACCEPTANCE_STRICT=1`
//! is set.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use kingman_cli::experiments::run;
use kingman_cli::{Experiment, ExperimentConfig, Metric, Summary};

struct Verdict {
    pass: bool,
    detail: String,
}

fn timed(experiment: Experiment, edit: impl FnOnce(&mut ExperimentConfig)) -> (Summary, Duration) {
    let mut cfg = ExperimentConfig::defaults(experiment);
    edit(&mut cfg);
    let start = Instant::now();
    let summary = run(&cfg).unwrap_or_else(|e| panic!("{experiment} failed to run: {e}"));
    (summary, start.elapsed())
}

fn all_pass<'a>(metrics: impl IntoIterator<Item = &'a Metric>) -> (bool, usize, Vec<String>) {
    let mut count = 0;
    let mut failed = Vec::new();
    for m in metrics {
        count += 1;
        if m.pass != Some(true) {
            failed.push(format!(
                "{}[n={:?} i={:?} h={:?}]={:.4e}",
                m.name, m.n, m.i, m.h, m.estimate
            ));
        }
    }
    (failed.is_empty() && count > 0, count, failed)
}

fn find<'a>(
    s: &'a Summary,
    name: &str,
    n: Option<usize>,
    i: Option<usize>,
    h: Option<f64>,
) -> &'a Metric {
    s.metrics
        .iter()
        .find(|m| {
            m.name == name
                && (n.is_none() || m.n == n)
                && (i.is_none() || m.i == i)
                && (h.is_none() || m.h == h)
        })
        .unwrap_or_else(|| panic!("missing metric {name} n={n:?} i={i:?} h={h:?}"))
}

fn exact_laws() -> Verdict {
    let (s, took) = timed(Experiment::LevelsExact, |c| c.n = vec![3, 4, 5, 6]);
    let (ok, count, failed) = all_pass(&s.metrics);
    let fast = took < Duration::from_secs(30);
    Verdict {
        pass: ok && fast,
        detail: format!(
            "{count} checks below 1e-10, {} failed {failed:?}, {:.2}s (limit 30s)",
            failed.len(),
            took.as_secs_f64()
        ),
    }
}

fn order_length_variances() -> Verdict {
    let (s, _) = timed(Experiment::FuExact, |c| c.n = vec![3, 4, 5, 6]);
    let (ok, count, failed) = all_pass(s.metric("variance"));
    let v31 = find(&s, "variance", Some(3), Some(1), None).estimate;
    let v41 = find(&s, "variance", Some(4), Some(1), None).estimate;
    let known = (v31 - 2.0).abs() < 1e-10 && (v41 - 16.0 / 9.0).abs() < 1e-10;
    Verdict {
        pass: ok && known,
        detail: format!(
            "{count} variances match, failed {failed:?}; (3,1) -> {v31}, (4,1) -> {v41}"
        ),
    }
}

fn birth_death() -> Verdict {
    let (s, took) = timed(Experiment::Bd, |c| {
        c.i = vec![1];
        c.lags = vec![2.0];
        c.reps = 1_000_000;
    });
    let p0 = find(&s, "p_hat_0", None, Some(1), None);
    let p1 = find(&s, "p_hat_1", None, Some(1), None);
    let trunc = find(&s, "truncation_mass_error", None, Some(1), None);
    let targets = p0.target == Some(0.5) && p1.target == Some(0.25);
    let ok = [p0, p1, trunc].iter().all(|m| m.pass == Some(true)) && targets;
    let fast = took < Duration::from_secs(60);
    Verdict {
        pass: ok && fast,
        detail: format!(
            "p0 {:.5} (se {:.1e}), p1 {:.5} (se {:.1e}), truncation error {:.1e}, {:.1}s (limit 60s)",
            p0.estimate,
            p0.stderr.unwrap_or(f64::NAN),
            p1.estimate,
            p1.stderr.unwrap_or(f64::NAN),
            trunc.estimate,
            took.as_secs_f64()
        ),
    }
}

fn coupling_exactness(s: &Summary) -> Verdict {
    let violations: f64 = s.metric("violations").map(|m| m.estimate).sum();
    let theta_ok = s.metric("max_theta_over_h").all(|m| m.estimate < 1.0);
    let traces = s.metric("violations").count();
    let before_fill: f64 = s
        .metric("traces_before_fill")
        .filter(|m| m.n == Some(100))
        .map(|m| m.estimate)
        .sum();
    let covered = [1, 2, 5].iter().all(|&i| {
        s.metric("violations")
            .any(|m| m.n == Some(100) && m.i == Some(i))
    });
    Verdict {
        pass: violations == 0.0 && theta_ok && covered && s.config.trace_reps >= 10_000,
        detail: format!(
            "{traces} (n, i) cells of {} traces, {violations} violations, theta_h < h: {theta_ok}, {before_fill} traces at n=100 with h <= tau",
            s.config.trace_reps
        ),
    }
}

fn disagreement_decay(s: &Summary) -> Verdict {
    let a = find(s, "disagreement", Some(100), None, None).estimate;
    let b = find(s, "disagreement", Some(400), None, None).estimate;
    let ratio = a / b;
    Verdict {
        pass: (2.5..=6.5).contains(&ratio)
            && s.config.reps >= 1_000_000
            && s.config.family == 4
            && s.config.subfamily == 2,
        detail: format!("P(100) = {a:.5}, P(400) = {b:.5}, ratio {ratio:.3} (accept [2.5, 6.5])"),
    }
}

fn decomposition() -> Verdict {
    let (s, took) = timed(Experiment::Decomposition, |c| {
        c.n = vec![200];
        c.lags = vec![1.0];
        c.reps = 1000;
    });
    let worst = find(&s, "max_relative_residual", Some(200), None, None);
    let fast = took < Duration::from_secs(60);
    Verdict {
        pass: worst.pass == Some(true) && fast,
        detail: format!(
            "max |residual|/(1 + L) = {:.2e}, {:.1}s (limit 60s)",
            worst.estimate,
            took.as_secs_f64()
        ),
    }
}

fn stationarity() -> Verdict {
    let (s, _) = timed(Experiment::Stationarity, |c| {
        c.n = vec![500];
        c.lags = vec![1.0, 2.0, 4.0];
        c.reps = 100_000;
    });
    let (ok, count, failed) = all_pass(s.metric("mean_external_length"));
    let means: Vec<String> = s
        .metric("mean_external_length")
        .map(|m| format!("{:.4}", m.estimate))
        .collect();
    Verdict {
        pass: ok && count == 4,
        detail: format!(
            "means at h = 0, 1, 2, 4: {} (3 se of 2), failed {failed:?}",
            means.join(", ")
        ),
    }
}

fn variance_anchor(s: &Summary) -> Verdict {
    let m = find(s, "normalized_variance", Some(2000), None, None);
    Verdict {
        pass: m.pass == Some(true) && s.config.reps >= 40_000,
        detail: format!(
            "variance {:.4} (se {:.3}) vs {:.4}",
            m.estimate,
            m.stderr.unwrap_or(f64::NAN),
            m.target.unwrap_or(f64::NAN)
        ),
    }
}

fn covariance_curve(s: &Summary) -> Verdict {
    let at_2000: Vec<&Metric> = s
        .metric("trimmed_correlation")
        .filter(|m| m.n == Some(2000))
        .collect();
    let (ok, count, failed) = all_pass(at_2000.iter().copied());
    let trend = find(s, "lags_with_shrinking_deviation", None, None, None);
    let shown: Vec<String> = at_2000
        .iter()
        .map(|m| {
            format!(
                "h={}: {:.3} vs {:.3}",
                m.h.unwrap_or(f64::NAN),
                m.estimate,
                m.target.unwrap_or(f64::NAN)
            )
        })
        .collect();
    Verdict {
        pass: ok && count == 4 && trend.estimate >= 3.0 && s.config.trim == 0.02,
        detail: format!(
            "{}; {} of 4 lags improve from n=500; failed {failed:?}",
            shown.join(", "),
            trend.estimate
        ),
    }
}

fn thinned_sum() -> Verdict {
    let (s, _) = timed(Experiment::ThinnedSum, |c| {
        c.n = vec![2000];
        c.r = Some(12);
        c.lags = vec![2.0];
        c.reps = 40_000;
    });
    let skew = find(&s, "trimmed_skewness", None, None, None);
    let kurt = find(&s, "trimmed_excess_kurtosis", None, None, None);
    let ratio = find(&s, "adjusted_variance_ratio", None, None, None);
    let base = find(&s, "baseline_variance_ratio", None, None, None);
    Verdict {
        pass: [skew, kurt, ratio].iter().all(|m| m.pass == Some(true)),
        detail: format!(
            "trimmed skew {:.3} (|.| < 0.15), trimmed excess kurtosis {:.3} (|.| < 0.4), variance ratio {:.3} after baseline {:.3} (within 0.15 of 1)",
            skew.estimate, kurt.estimate, ratio.estimate, base.estimate
        ),
    }
}

fn mutations() -> Verdict {
    let (s, _) = timed(Experiment::Mutations, |c| {
        c.n = vec![100];
        c.phi = 2.0;
        c.reps = 100_000;
        c.r = Some(5);
    });
    let (ok, count, failed) = all_pass(&s.metrics);
    let var = find(&s, "variance", None, Some(1), None);
    Verdict {
        pass: ok && count == 6,
        detail: format!(
            "5 order means within 3 se, Var M_1 {:.4} vs {:.4}; failed {failed:?}",
            var.estimate,
            var.target.unwrap_or(f64::NAN)
        ),
    }
}

fn iterm() -> Verdict {
    let (s, _) = timed(Experiment::Iterm, |c| {
        c.n = vec![200, 800];
        c.lags = vec![1.0];
        c.reps = 100_000;
    });
    let ratio = find(&s, "scaled_variance_ratio", None, None, None);
    Verdict {
        pass: ratio.pass == Some(true),
        detail: format!("n Var(I) ratio {:.3} (accept [0.3, 3])", ratio.estimate),
    }
}

fn concentration_trend() -> Verdict {
    let (s, _) = timed(Experiment::Lemma5, |c| {
        c.n = vec![500, 2000, 8000];
        c.i = vec![1];
    });
    let sums: Vec<String> = s
        .metric("median_sum")
        .map(|m| format!("{:.3}", m.estimate))
        .collect();
    let maxes: Vec<String> = s
        .metric("median_max")
        .map(|m| format!("{:.3}", m.estimate))
        .collect();
    let ok = find(&s, "sum_median_approaches_one", None, Some(1), None).pass == Some(true)
        && find(&s, "max_median_decreasing", None, Some(1), None).pass == Some(true);
    Verdict {
        pass: ok,
        detail: format!(
            "median sums {}, median maxima {}",
            sums.join(" -> "),
            maxes.join(" -> ")
        ),
    }
}

/// Reduced-size configuration for the rerun check.
fn reduced(e: Experiment) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(e);
    c.reps = c.reps.min(1500);
    c.trace_reps = 100;
    c
}

fn determinism() -> Verdict {
    let mut differing = Vec::new();
    for e in Experiment::ALL {
        let cfg = reduced(e);
        let a = run(&cfg)
            .and_then(|s| s.to_json())
            .unwrap_or_else(|err| panic!("{e}: {err}"));
        let b = run(&cfg)
            .and_then(|s| s.to_json())
            .unwrap_or_else(|err| panic!("{e}: {err}"));
        if a != b {
            differing.push(e.name());
        }
    }
    Verdict {
        pass: differing.is_empty(),
        detail: format!(
            "{} experiments rerun, differing: {differing:?}",
            Experiment::ALL.len()
        ),
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, title: &'static str, v: Verdict| {
        println!(
            "criterion {id:>2} {} {title}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        results.push((id, title, v));
    };
    report(1, "exact-law agreement", exact_laws());
    report(2, "order-length variance formula", order_length_variances());
    report(3, "birth-death law", birth_death());
    let (coupling, _) = timed(Experiment::Coupling, |c| {
        c.n = vec![100, 400];
        c.i = vec![1, 2, 5];
        c.lags = vec![2.0];
        c.trace_reps = 10_000;
        c.reps = 1_000_000;
        c.decay_h = 1.0;
    });
    report(4, "coupling exactness", coupling_exactness(&coupling));
    report(5, "disagreement decay", disagreement_decay(&coupling));
    report(6, "pathwise decomposition", decomposition());
    report(7, "stationarity", stationarity());
    let (cov, _) = timed(Experiment::Covariance, |c| {
        c.n = vec![500, 2000];
        c.lags = vec![0.5, 1.0, 2.0, 4.0];
        c.reps = 40_000;
        c.trim = 0.02;
    });
    report(8, "finite-n variance anchor", variance_anchor(&cov));
    report(9, "covariance curve", covariance_curve(&cov));
    report(10, "thinned-sum CLT", thinned_sum());
    report(11, "mutation layer", mutations());
    report(12, "I-term scaling", iterm());
    report(13, "inverse-level concentration trend", concentration_trend());
    report(14, "determinism", determinism());

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "{} of {} criteria passed; failed: {failed:?}",
        results.len() - failed.len(),
        results.len()
    );
    let strict = std::env::var("KINGMAN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && !failed.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
