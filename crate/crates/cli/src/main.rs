use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use kingman_cli::config::{resolve, ConfigFile, SEED_ENV};
use kingman_cli::{execute, Experiment};

#[derive(Parser)]
#[command(
    name = "kingman",
    version,
    about = "Simulation experiments on evolving Kingman coalescent genealogies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Small-n exact level laws against their closed forms.
    LevelsExact(Common),
    /// Small-n exact order-length moments against their closed forms.
    FuExact(Common),
    /// Critical birth–death simulation against the exact law.
    Bd(Common),
    /// Pathwise coupling checks and the disagreement decay.
    Coupling(Common),
    /// Pathwise decomposition of the external length.
    Decomposition(Common),
    /// Mean external length over time from a stationary start.
    Stationarity(Common),
    /// Covariance of the normalized external length across time.
    Covariance(Common),
    /// Normality and variance of thinned branch-weight sums.
    ThinnedSum(Common),
    /// Concentration of inverse final levels.
    Lemma5(Common),
    /// Variance scaling of the newly accrued external length.
    Iterm(Common),
    /// Mutation counts by branch order.
    Mutations(Common),
    /// Gumbel fit of the centered total tree length.
    Gumbel(Common),
    /// Runs the experiment named by `experiment = ...` in the config file.
    Run(Common),
}

#[derive(Args, Default)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sizes, comma separated.
    #[arg(long)]
    n: Option<String>,
    /// Times in generations, comma separated.
    #[arg(long)]
    lags: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    /// Order cutoff.
    #[arg(long)]
    r: Option<usize>,
    /// Orders or family sizes, comma separated.
    #[arg(long)]
    i: Option<String>,
    /// Mutation rate.
    #[arg(long)]
    phi: Option<f64>,
    /// Master seed (overrides the environment).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Fraction trimmed from each tail.
    #[arg(long)]
    trim: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other setting, as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> anyhow::Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let mut add = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push((k.to_string(), v));
            }
        };
        add("n", self.n.clone());
        add("lags", self.lags.clone());
        add("reps", self.reps.clone());
        add("r", self.r.map(|v| v.to_string()));
        add("i", self.i.clone());
        add("phi", self.phi.map(|v| v.to_string()));
        add("seed", self.seed.map(|v| v.to_string()));
        add("workers", self.workers.map(|v| v.to_string()));
        add("trim", self.trim.map(|v| v.to_string()));
        add("out", self.out.as_ref().map(|p| p.display().to_string()));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }
}

fn split(command: Command) -> (Option<Experiment>, Common) {
    use Command as C;
    match command {
        C::LevelsExact(c) => (Some(Experiment::LevelsExact), c),
        C::FuExact(c) => (Some(Experiment::FuExact), c),
        C::Bd(c) => (Some(Experiment::Bd), c),
        C::Coupling(c) => (Some(Experiment::Coupling), c),
        C::Decomposition(c) => (Some(Experiment::Decomposition), c),
        C::Stationarity(c) => (Some(Experiment::Stationarity), c),
        C::Covariance(c) => (Some(Experiment::Covariance), c),
        C::ThinnedSum(c) => (Some(Experiment::ThinnedSum), c),
        C::Lemma5(c) => (Some(Experiment::Lemma5), c),
        C::Iterm(c) => (Some(Experiment::Iterm), c),
        C::Mutations(c) => (Some(Experiment::Mutations), c),
        C::Gumbel(c) => (Some(Experiment::Gumbel), c),
        C::Run(c) => (None, c),
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    let (chosen, common) = split(cli.command);
    let file = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            Some(ConfigFile::parse(&text)?)
        }
        None => None,
    };
    let named = file
        .as_ref()
        .and_then(|f| f.experiment())
        .map(str::parse::<Experiment>)
        .transpose()?;
    let experiment = match (chosen, named) {
        (Some(a), Some(b)) if a != b => {
            bail!("subcommand {a} does not match experiment {b} in the config file")
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => bail!("`run` needs a config file with an `experiment = ...` line"),
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    let cfg = resolve(
        experiment,
        file.as_ref(),
        env_seed.as_deref(),
        &common.overrides()?,
    )?;
    let (summary, files) = execute(&cfg, file.as_ref().map(|f| f.text.as_str()))?;

    for m in &summary.metrics {
        let verdict = match (m.pass, m.hard) {
            (Some(true), _) => "ok",
            (Some(false), true) => "FAIL",
            (Some(false), false) => "warn",
            (None, _) => "",
        };
        let at: Vec<String> = [
            ("n", m.n.map(|v| v.to_string())),
            ("h", m.h.map(|v| v.to_string())),
            ("i", m.i.map(|v| v.to_string())),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| format!("{k}={v}")))
        .collect();
        let target = m
            .target
            .map(|t| format!(" target {t:.6}"))
            .unwrap_or_default();
        let se = m.stderr.map(|s| format!(" ± {s:.2e}")).unwrap_or_default();
        println!(
            "{:<4} {:<32} {:<22} {:.6}{se}{target}",
            verdict,
            m.name,
            at.join(" "),
            m.estimate
        );
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(summary.passed)
}
