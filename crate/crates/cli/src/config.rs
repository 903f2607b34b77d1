//! Experiment configuration: `key = value` files, per-experiment defaults and
//! command-line overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::error::ConfigError;

/// Environment variable that overrides the master seed.
pub const SEED_ENV: &str = "KINGMAN_SEED";

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LevelsExact,
    FuExact,
    Bd,
    Coupling,
    Decomposition,
    Stationarity,
    Covariance,
    ThinnedSum,
    Lemma5,
    Iterm,
    Mutations,
    Gumbel,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::LevelsExact,
        Experiment::FuExact,
        Experiment::Bd,
        Experiment::Coupling,
        Experiment::Decomposition,
        Experiment::Stationarity,
        Experiment::Covariance,
        Experiment::ThinnedSum,
        Experiment::Lemma5,
        Experiment::Iterm,
        Experiment::Mutations,
        Experiment::Gumbel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::LevelsExact => "levels-exact",
            Experiment::FuExact => "fu-exact",
            Experiment::Bd => "bd",
            Experiment::Coupling => "coupling",
            Experiment::Decomposition => "decomposition",
            Experiment::Stationarity => "stationarity",
            Experiment::Covariance => "covariance",
            Experiment::ThinnedSum => "thinned-sum",
            Experiment::Lemma5 => "lemma5",
            Experiment::Iterm => "iterm",
            Experiment::Mutations => "mutations",
            Experiment::Gumbel => "gumbel",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    /// Population or sample sizes.
    pub n: Vec<usize>,
    /// Generations lags (or the single time `h` for one-time experiments).
    pub lags: Vec<f64>,
    pub reps: u64,
    /// Order cutoff.
    pub r: Option<usize>,
    /// Family sizes or branch orders.
    pub i: Vec<usize>,
    /// Mutation rate; mutations fall at rate `phi/2` per unit length.
    pub phi: f64,
    pub seed: u64,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    pub workers: usize,
    pub trim: f64,
    pub out: Option<PathBuf>,
    /// Coupled traces checked per family size (coupling experiment).
    pub trace_reps: u64,
    /// Tracked family size for the disagreement estimate (coupling experiment).
    pub family: usize,
    /// Size of the sub-family whose singleton events are compared.
    pub subfamily: usize,
    /// Time for the disagreement estimate (coupling experiment).
    pub decay_h: f64,
}

impl ExperimentConfig {
    /// Defaults sized for the acceptance targets of each experiment.
    pub fn defaults(experiment: Experiment) -> Self {
        let base = ExperimentConfig {
            experiment,
            n: vec![],
            lags: vec![],
            reps: 0,
            r: None,
            i: vec![],
            phi: 2.0,
            seed: DEFAULT_SEED,
            workers: 0,
            trim: 0.02,
            out: None,
            trace_reps: 10_000,
            family: 4,
            subfamily: 2,
            decay_h: 1.0,
        };
        match experiment {
            Experiment::LevelsExact | Experiment::FuExact => ExperimentConfig {
                n: vec![3, 4, 5, 6],
                ..base
            },
            Experiment::Bd => ExperimentConfig {
                lags: vec![2.0],
                reps: 1_000_000,
                i: vec![1],
                ..base
            },
            Experiment::Coupling => ExperimentConfig {
                n: vec![100, 400],
                lags: vec![2.0],
                reps: 1_000_000,
                i: vec![1, 2, 5],
                ..base
            },
            Experiment::Decomposition => ExperimentConfig {
                n: vec![200],
                lags: vec![1.0],
                reps: 1_000,
                ..base
            },
            Experiment::Stationarity => ExperimentConfig {
                n: vec![500],
                lags: vec![1.0, 2.0, 4.0],
                reps: 100_000,
                ..base
            },
            Experiment::Covariance => ExperimentConfig {
                n: vec![500, 2000],
                lags: vec![0.5, 1.0, 2.0, 4.0],
                reps: 40_000,
                ..base
            },
            Experiment::ThinnedSum => ExperimentConfig {
                n: vec![2000],
                lags: vec![2.0],
                reps: 40_000,
                r: Some(12),
                ..base
            },
            Experiment::Lemma5 => ExperimentConfig {
                n: vec![500, 2000, 8000],
                reps: 4_000,
                i: vec![1],
                ..base
            },
            Experiment::Iterm => ExperimentConfig {
                n: vec![200, 800],
                lags: vec![1.0],
                reps: 100_000,
                ..base
            },
            Experiment::Mutations => ExperimentConfig {
                n: vec![100],
                reps: 100_000,
                r: Some(5),
                ..base
            },
            Experiment::Gumbel => ExperimentConfig {
                n: vec![1000],
                reps: 100_000,
                ..base
            },
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |msg: &str| ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: msg.to_string(),
        };
        match key {
            "experiment" => self.experiment = value.parse()?,
            "n" => self.n = parse_list(value).map_err(|e| bad(&e))?,
            "lags" | "h" => self.lags = parse_list(value).map_err(|e| bad(&e))?,
            "reps" => self.reps = parse_count(value).map_err(|e| bad(&e))?,
            "r" => self.r = Some(value.parse().map_err(|_| bad("expected an integer"))?),
            "i" => self.i = parse_list(value).map_err(|e| bad(&e))?,
            "phi" => self.phi = value.parse().map_err(|_| bad("expected a number"))?,
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad("expected an unsigned integer"))?
            }
            "workers" => self.workers = value.parse().map_err(|_| bad("expected an integer"))?,
            "trim" => self.trim = value.parse().map_err(|_| bad("expected a number"))?,
            "out" => self.out = Some(PathBuf::from(value)),
            "trace_reps" => self.trace_reps = parse_count(value).map_err(|e| bad(&e))?,
            "family" => self.family = value.parse().map_err(|_| bad("expected an integer"))?,
            "subfamily" => {
                self.subfamily = value.parse().map_err(|_| bad("expected an integer"))?
            }
            "decay_h" => self.decay_h = value.parse().map_err(|_| bad("expected a number"))?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Range checks shared by all experiments.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |reason: String| Err(ConfigError::Invalid(reason));
        if self.n.iter().any(|&n| n < 2) {
            return fail("every n must be at least 2".into());
        }
        if self.lags.iter().any(|&h| !(h >= 0.0) || !h.is_finite()) {
            return fail("lags must be finite and non-negative".into());
        }
        if !(0.0..=0.1).contains(&self.trim) {
            return fail(format!("trim must be in [0, 0.1], got {}", self.trim));
        }
        if !(self.phi > 0.0) || !self.phi.is_finite() {
            return fail(format!("phi must be positive, got {}", self.phi));
        }
        if self.r == Some(0) {
            return fail("r must be at least 1".into());
        }
        let needs_reps = !matches!(
            self.experiment,
            Experiment::LevelsExact | Experiment::FuExact
        );
        if needs_reps && self.reps < 2 {
            return fail("reps must be at least 2".into());
        }
        if self.n.is_empty() && self.experiment != Experiment::Bd {
            return fail("n list is empty".into());
        }
        Ok(())
    }
}

fn parse_count(value: &str) -> Result<u64, String> {
    // accepts plain integers and forms like 1e6
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v);
    }
    match value.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as u64),
        _ => Err("expected a non-negative integer".into()),
    }
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>, String> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| format!("cannot parse list item {s:?}"))
        })
        .collect()
}

/// Parsed `key = value` file; the original text is kept for the run summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub text: String,
    pub entries: Vec<(String, String)>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
                line: lineno + 1,
                text: raw.to_string(),
            })?;
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(Self {
            text: text.to_string(),
            entries,
        })
    }

    pub fn experiment(&self) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == "experiment")
            .map(|(_, v)| v.as_str())
    }
}

/// Builds a configuration from defaults, then the file, then the seed
/// environment variable, then explicit overrides (in that order of precedence).
pub fn resolve(
    experiment: Experiment,
    file: Option<&ConfigFile>,
    env_seed: Option<&str>,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::defaults(experiment);
    if let Some(file) = file {
        for (k, v) in &file.entries {
            if k == "experiment" {
                continue;
            }
            cfg.set(k, v)?;
        }
    }
    if let Some(seed) = env_seed {
        cfg.set("seed", seed)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
