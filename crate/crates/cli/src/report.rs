//! Metrics, tables and the files written for each run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Result, RunError};

/// Header of the per-run metrics CSV.
pub const METRIC_HEADER: [&str; 9] = [
    "experiment",
    "n",
    "h",
    "i",
    "metric",
    "estimate",
    "stderr",
    "target",
    "pass",
];

/// One checked (or merely reported) quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub n: Option<usize>,
    pub h: Option<f64>,
    pub i: Option<usize>,
    pub name: String,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub target: Option<f64>,
    /// Accepted interval for the estimate.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// `None` for informational metrics.
    pub pass: Option<bool>,
    /// Hard checks decide the exit code; soft ones are diagnostics.
    pub hard: bool,
}

impl Metric {
    pub fn info(name: &str, estimate: f64) -> Self {
        Self {
            n: None,
            h: None,
            i: None,
            name: name.to_string(),
            estimate,
            stderr: None,
            target: None,
            lower: None,
            upper: None,
            pass: None,
            hard: false,
        }
    }

    /// Passes when `lower <= estimate <= upper`.
    pub fn bounded(name: &str, estimate: f64, lower: f64, upper: f64) -> Self {
        let mut m = Self::info(name, estimate);
        m.lower = Some(lower);
        m.upper = Some(upper);
        m.pass = Some(lower <= estimate && estimate <= upper);
        m.hard = true;
        m
    }

    /// Passes when `|estimate − target| <= tolerance`.
    pub fn near(name: &str, estimate: f64, target: f64, tolerance: f64) -> Self {
        let mut m = Self::bounded(name, estimate, target - tolerance, target + tolerance);
        m.target = Some(target);
        m
    }

    /// Passes when the estimate is within `k` standard errors of the target.
    pub fn within_se(name: &str, estimate: f64, stderr: f64, target: f64, k: f64) -> Self {
        Self::near(name, estimate, target, k * stderr).with_stderr(stderr)
    }

    /// A yes/no condition, reported as 1 or 0 with target 1.
    pub fn flag(name: &str, ok: bool) -> Self {
        let mut m = Self::info(name, if ok { 1.0 } else { 0.0 });
        m.target = Some(1.0);
        m.pass = Some(ok);
        m.hard = true;
        m
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }

    pub fn at_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn at_h(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }

    pub fn at_i(mut self, i: usize) -> Self {
        self.i = Some(i);
        self
    }

    pub fn soft(mut self) -> Self {
        self.hard = false;
        self
    }

    pub fn failed_hard(&self) -> bool {
        self.hard && self.pass == Some(false)
    }
}

/// Extra plot-ready table written next to the metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, T>(&mut self, row: I)
    where
        I: IntoIterator<Item = T>,
        T: ToString,
    {
        let row: Vec<String> = row.into_iter().map(|c| c.to_string()).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Everything a run produces. Identical configurations give byte-identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub config: ExperimentConfig,
    /// The configuration file exactly as read, if one was used.
    pub config_text: Option<String>,
    pub passed: bool,
    pub metrics: Vec<Metric>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl Summary {
    pub fn new(config: &ExperimentConfig, metrics: Vec<Metric>, tables: Vec<Table>) -> Self {
        let passed = metrics.iter().all(|m| !m.failed_hard());
        Self {
            experiment: config.experiment.name().to_string(),
            config: config.clone(),
            config_text: None,
            passed,
            metrics,
            tables,
        }
    }

    pub fn metric<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Metric> {
        self.metrics.iter().filter(move |m| m.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Metric> {
        self.metrics.iter().filter(|m| m.failed_hard())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| RunError::Encode(e.to_string()))
    }

    pub fn metrics_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let encode = |e: csv::Error| RunError::Encode(e.to_string());
        w.write_record(METRIC_HEADER).map_err(encode)?;
        for m in &self.metrics {
            w.write_record([
                self.experiment.clone(),
                opt(m.n),
                opt(m.h),
                opt(m.i),
                m.name.clone(),
                m.estimate.to_string(),
                opt(m.stderr),
                opt(m.target),
                opt(m.pass),
            ])
            .map_err(encode)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| RunError::Encode(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| RunError::Encode(e.to_string()))
    }

    fn table_csv(table: &Table) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let encode = |e: csv::Error| RunError::Encode(e.to_string());
        w.write_record(&table.header).map_err(encode)?;
        for row in &table.rows {
            w.write_record(row).map_err(encode)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| RunError::Encode(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| RunError::Encode(e.to_string()))
    }

    /// Writes `<exp>_metrics.csv`, `<exp>_summary.json` and one
    /// `<exp>_<table>.csv` per table into `dir`. Returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| RunError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let exp = self.experiment.replace('-', "_");
        let mut files = vec![
            (dir.join(format!("{exp}_metrics.csv")), self.metrics_csv()?),
            (dir.join(format!("{exp}_summary.json")), self.to_json()?),
        ];
        for t in &self.tables {
            files.push((
                dir.join(format!("{exp}_{}.csv", t.name)),
                Self::table_csv(t)?,
            ));
        }
        for (path, body) in &files {
            fs::write(path, body).map_err(io(path))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
