//! Streaming moment estimators, lag covariances across replicates and
//! distributional diagnostics.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};

/// Mergeable one-pass accumulator of the first four central moments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut acc = Self::new();
        for &x in xs {
            acc.push(x);
        }
        acc
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let t1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += t1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += t1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += t1;
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.mean += delta * nb / n;
        self.count += other.count;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance (0 for fewer than two points).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64).max(0.0)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    /// Sample skewness `√n · m3 / m2^{3/2}`.
    pub fn skewness(&self) -> f64 {
        let n = self.count as f64;
        n.sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// Sample excess kurtosis `n · m4 / m2² − 3`.
    pub fn excess_kurtosis(&self) -> f64 {
        let n = self.count as f64;
        n * self.m4 / (self.m2 * self.m2) - 3.0
    }

    /// Large-sample standard error of the unbiased variance, from the fourth moment.
    pub fn variance_stderr(&self) -> f64 {
        let n = self.count as f64;
        if n < 4.0 {
            return f64::NAN;
        }
        let m2 = self.m2 / n;
        let m4 = self.m4 / n;
        ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Mergeable accumulator of paired samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairAccumulator {
    count: u64,
    mean_x: f64,
    mean_y: f64,
    m2x: f64,
    m2y: f64,
    cxy: f64,
}

impl PairAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64, y: f64) {
        self.count += 1;
        let n = self.count as f64;
        let dx = x - self.mean_x;
        let dy = y - self.mean_y;
        self.mean_x += dx / n;
        self.mean_y += dy / n;
        self.m2x += dx * (x - self.mean_x);
        self.m2y += dy * (y - self.mean_y);
        self.cxy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        self.m2x += other.m2x + dx * dx * na * nb / n;
        self.m2y += other.m2y + dy * dy * na * nb / n;
        self.cxy += other.cxy + dx * dy * na * nb / n;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn covariance(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        self.cxy / (self.count - 1) as f64
    }

    /// `None` when either marginal has zero variance.
    pub fn correlation(&self) -> Option<f64> {
        if self.m2x <= 0.0 || self.m2y <= 0.0 {
            return None;
        }
        Some(self.cxy / (self.m2x * self.m2y).sqrt())
    }
}

/// Normalized values of many replicates sampled on a shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LagGrid {
    lags: Vec<f64>,
    /// Row per replicate: value at time 0 followed by one value per lag.
    rows: Vec<Vec<f64>>,
}

impl LagGrid {
    pub fn new(lags: Vec<f64>) -> Result<Self> {
        if lags.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(invalid!("lags must be finite and positive"));
        }
        Ok(Self {
            lags,
            rows: Vec::new(),
        })
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.lags.len() + 1 {
            return Err(invalid!(
                "row has {} values, expected {}",
                row.len(),
                self.lags.len() + 1
            ));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("grid values must be finite"));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn replicates(&self) -> usize {
        self.rows.len()
    }

    /// Values at grid point `col` (0 = time 0).
    pub fn column(&self, col: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[col]).collect()
    }
}

/// Default number of batches for batch-means standard errors.
pub const BATCHES: usize = 32;

/// Covariance between the time-0 and time-`lag` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagCovariance {
    pub lag: f64,
    pub covariance: f64,
    pub covariance_se: f64,
    /// `None` when a marginal is degenerate.
    pub correlation: Option<f64>,
    pub correlation_se: f64,
    pub trimmed_correlation: Option<f64>,
    pub trimmed_se: f64,
    /// Pairs left after trimming.
    pub kept: usize,
    pub degenerate: bool,
}

/// Ensemble covariance and correlation per lag. Trimming drops every pair in
/// which either value lies outside its marginal `[trim, 1 − trim]` quantile band.
pub fn lag_covariance(grid: &LagGrid, trim: f64) -> Result<Vec<LagCovariance>> {
    if grid.replicates() < 2 {
        return Err(invalid!("need at least 2 replicates"));
    }
    if !(0.0..=0.1).contains(&trim) {
        return Err(invalid!("trim must be in [0, 0.1], got {trim}"));
    }
    let base = grid.column(0);
    let base_band = band(&base, trim);
    let mut out = Vec::with_capacity(grid.lags().len());
    for (c, &lag) in grid.lags().iter().enumerate() {
        let other = grid.column(c + 1);
        let full: Vec<(f64, f64)> = base.iter().copied().zip(other.iter().copied()).collect();
        let other_band = band(&other, trim);
        let kept: Vec<(f64, f64)> = full
            .iter()
            .copied()
            .filter(|&(x, y)| within(x, base_band) && within(y, other_band))
            .collect();
        let all = pair_stats(&full);
        let cut = pair_stats(&kept);
        let correlation = all.correlation();
        let trimmed = cut.correlation();
        out.push(LagCovariance {
            lag,
            covariance: all.covariance(),
            covariance_se: batch_se(&full, |a| Some(a.covariance())),
            correlation,
            correlation_se: batch_se(&full, PairAccumulator::correlation),
            trimmed_correlation: trimmed,
            trimmed_se: batch_se(&kept, PairAccumulator::correlation),
            kept: kept.len(),
            degenerate: correlation.is_none() || trimmed.is_none(),
        });
    }
    Ok(out)
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    lo <= x && x <= hi
}

fn band(xs: &[f64], trim: f64) -> (f64, f64) {
    if trim == 0.0 {
        return (f64::NEG_INFINITY, f64::INFINITY);
    }
    let sorted = sorted_copy(xs);
    (
        quantile_sorted(&sorted, trim),
        quantile_sorted(&sorted, 1.0 - trim),
    )
}

fn pair_stats(pairs: &[(f64, f64)]) -> PairAccumulator {
    let mut acc = PairAccumulator::new();
    for &(x, y) in pairs {
        acc.push(x, y);
    }
    acc
}

/// Standard error of `stat` from contiguous batches in index order.
fn batch_se<F: Fn(&PairAccumulator) -> Option<f64>>(pairs: &[(f64, f64)], stat: F) -> f64 {
    let batches = BATCHES.min(pairs.len() / 2);
    if batches < 2 {
        return f64::NAN;
    }
    let mut acc = Accumulator::new();
    for b in 0..batches {
        let lo = b * pairs.len() / batches;
        let hi = (b + 1) * pairs.len() / batches;
        match stat(&pair_stats(&pairs[lo..hi])) {
            Some(v) if v.is_finite() => acc.push(v),
            _ => return f64::NAN,
        }
    }
    acc.stderr()
}

/// Batch-means standard error of the mean of `xs`.
pub fn batch_means_se(xs: &[f64], batches: usize) -> f64 {
    let batches = batches.min(xs.len());
    if batches < 2 {
        return f64::NAN;
    }
    let mut acc = Accumulator::new();
    for b in 0..batches {
        let lo = b * xs.len() / batches;
        let hi = (b + 1) * xs.len() / batches;
        acc.push(Accumulator::from_slice(&xs[lo..hi]).mean());
    }
    acc.stderr()
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linearly interpolated quantile of a sorted sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_sorted(&sorted_copy(xs), 0.5)
}

/// Keeps values inside the `[trim, 1 − trim]` quantile band.
pub fn trim_sample(xs: &[f64], trim: f64) -> Vec<f64> {
    let b = band(xs, trim);
    xs.iter().copied().filter(|&x| within(x, b)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityReport {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Largest gap between the empirical CDF of the studentized sample and Φ.
    pub ks_distance: f64,
}

pub fn normality_diagnostics(xs: &[f64]) -> Result<NormalityReport> {
    if xs.len() < 100 {
        return Err(invalid!("need at least 100 values, got {}", xs.len()));
    }
    let acc = Accumulator::from_slice(xs);
    let (mean, sd) = (acc.mean(), acc.std_dev());
    let normal = Normal::standard();
    let ks = if sd > 0.0 {
        ks_distance(xs, |x| normal.cdf((x - mean) / sd))
    } else {
        1.0
    };
    Ok(NormalityReport {
        skewness: acc.skewness(),
        excess_kurtosis: acc.excess_kurtosis(),
        ks_distance: ks,
    })
}

/// Excess kurtosis of a standard normal truncated to its `[trim, 1 − trim]`
/// quantile band. Trimmed samples are compared against this value.
pub fn trimmed_normal_excess_kurtosis(trim: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&trim) {
        return Err(invalid!("trim must be in [0, 0.5), got {trim}"));
    }
    if trim == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::standard();
    let c = normal.inverse_cdf(1.0 - trim);
    let phi = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mass = 1.0 - 2.0 * trim;
    let m2 = 1.0 - 2.0 * c * phi / mass;
    let m4 = 3.0 - (2.0 * c.powi(3) + 6.0 * c) * phi / mass;
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Kolmogorov distance between the empirical CDF of `xs` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let sorted = sorted_copy(xs);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Location-scale Gumbel (maximum) fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelFit {
    pub location: f64,
    pub scale: f64,
    pub ks_distance: f64,
}

impl GumbelFit {
    pub fn cdf(&self, x: f64) -> f64 {
        (-(-(x - self.location) / self.scale).exp()).exp()
    }
}

/// Maximum-likelihood Gumbel fit by Newton iteration on the scale equation.
pub fn fit_gumbel(xs: &[f64]) -> Result<GumbelFit> {
    if xs.len() < 2 {
        return Err(invalid!("need at least 2 values"));
    }
    let acc = Accumulator::from_slice(xs);
    let center = acc.mean();
    let ys: Vec<f64> = xs.iter().map(|x| x - center).collect();
    if acc.std_dev() == 0.0 {
        return Err(invalid!("sample is constant"));
    }
    // scale solves  β = mean(y) − Σ y w / Σ w  with  w = exp(−y/β); mean(y) = 0
    let mut beta = acc.std_dev() * 6f64.sqrt() / std::f64::consts::PI;
    for _ in 0..200 {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &y in &ys {
            let w = (-y / beta).exp();
            s0 += w;
            s1 += y * w;
            s2 += y * y * w;
        }
        let g = -beta - s1 / s0;
        let dg = -1.0 - (s2 * s0 - s1 * s1) / (s0 * s0 * beta * beta);
        let mut next = beta - g / dg;
        if !(next > 0.0) {
            next = beta / 2.0;
        }
        let done = (next - beta).abs() <= 1e-13 * beta;
        beta = next;
        if done {
            break;
        }
    }
    let mean_w = ys.iter().map(|&y| (-y / beta).exp()).sum::<f64>() / ys.len() as f64;
    let location = center - beta * mean_w.ln();
    let mut fit = GumbelFit {
        location,
        scale: beta,
        ks_distance: 0.0,
    };
    fit.ks_distance = ks_distance(xs, |x| fit.cdf(x));
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::SeedStream;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::{Exp1, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeedStream::new(seed).replicate(0);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn trimmed_normal_reference() {
        assert_eq!(trimmed_normal_excess_kurtosis(0.0).unwrap(), 0.0);
        let reference = trimmed_normal_excess_kurtosis(0.02).unwrap();
        assert!((reference + 0.607).abs() < 0.01, "{reference}");
        let trimmed = trim_sample(&normals(400_000, 9), 0.02);
        let acc = Accumulator::from_slice(&trimmed);
        assert!((acc.excess_kurtosis() - reference).abs() < 0.02);
        assert!(trimmed_normal_excess_kurtosis(0.6).is_err());
    }

    #[test]
    fn small_samples() {
        let acc = Accumulator::from_slice(&[0.0, 2.0]);
        assert_eq!(acc.mean(), 1.0);
        assert_eq!(acc.variance(), 2.0);
        assert_eq!(Accumulator::from_slice(&[3.5; 10]).variance(), 0.0);
        let sym = Accumulator::from_slice(&[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(sym.skewness(), 0.0);
    }

    #[test]
    fn merge_matches_concatenation() {
        let xs = normals(1000, 1);
        let whole = Accumulator::from_slice(&xs);
        let mut left = Accumulator::from_slice(&xs[..377]);
        left.merge(&Accumulator::from_slice(&xs[377..]));
        assert_relative_eq!(
            left.mean(),
            whole.mean(),
            max_relative = 1e-12,
            epsilon = 1e-15
        );
        assert_relative_eq!(left.variance(), whole.variance(), max_relative = 1e-12);
        assert_relative_eq!(
            left.skewness(),
            whole.skewness(),
            max_relative = 1e-9,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            left.excess_kurtosis(),
            whole.excess_kurtosis(),
            max_relative = 1e-9,
            epsilon = 1e-12
        );
    }

    #[test]
    fn moment_diagnostics() {
        let xs = normals(1_000_000, 2);
        let r = normality_diagnostics(&xs).unwrap();
        assert!(
            r.skewness.abs() < 0.01 && r.excess_kurtosis.abs() < 0.03,
            "{r:?}"
        );
        assert!(r.ks_distance < 0.003);
        let mut rng = SeedStream::new(3).replicate(0);
        let ex: Vec<f64> = (0..200_000).map(|_| rng.sample(Exp1)).collect();
        let r = normality_diagnostics(&ex).unwrap();
        assert!((r.skewness - 2.0).abs() < 0.1, "{r:?}");
        assert!(normality_diagnostics(&xs[..50]).is_err());
    }

    #[test]
    fn lag_covariance_basics() {
        let xs = normals(100_000, 4);
        let ys = normals(100_000, 5);
        let mut same = LagGrid::new(vec![1.0, 2.0]).unwrap();
        let mut indep = LagGrid::new(vec![1.0]).unwrap();
        for (&x, &y) in xs.iter().zip(&ys) {
            same.push(vec![x, x, x]).unwrap();
            indep.push(vec![x, y]).unwrap();
        }
        for row in lag_covariance(&same, 0.02).unwrap() {
            assert_relative_eq!(row.correlation.unwrap(), 1.0, max_relative = 1e-12);
            assert_relative_eq!(row.trimmed_correlation.unwrap(), 1.0, max_relative = 1e-12);
        }
        let row = lag_covariance(&indep, 0.0).unwrap()[0];
        assert!(row.correlation.unwrap().abs() < 3.0 * row.correlation_se);
        assert!(lag_covariance(&indep, 0.2).is_err());
        assert!(LagGrid::new(vec![0.0]).is_err());
    }

    #[test]
    fn zero_trim_reproduces_untrimmed() {
        let xs = normals(5000, 6);
        let mut grid = LagGrid::new(vec![0.5]).unwrap();
        for w in xs.chunks(2) {
            grid.push(vec![w[0], w[0] * 0.5 + w[1]]).unwrap();
        }
        let row = lag_covariance(&grid, 0.0).unwrap()[0];
        assert_eq!(row.trimmed_correlation, row.correlation);
        assert_eq!(row.trimmed_se, row.correlation_se);
        assert_eq!(row.kept, grid.replicates());
    }

    #[test]
    fn degenerate_marginal_is_flagged() {
        let mut grid = LagGrid::new(vec![1.0]).unwrap();
        for i in 0..10 {
            grid.push(vec![1.0, i as f64]).unwrap();
        }
        let row = lag_covariance(&grid, 0.0).unwrap()[0];
        assert!(row.degenerate && row.correlation.is_none());
    }

    #[test]
    fn batch_means_scale_like_root_n() {
        let xs = normals(1 << 20, 7);
        let sizes = [1usize << 12, 1 << 14, 1 << 16, 1 << 18, 1 << 20];
        let pts: Vec<(f64, f64)> = sizes
            .iter()
            .map(|&m| ((m as f64).ln(), batch_means_se(&xs[..m], BATCHES).ln()))
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.1, "{slope}");
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(median(&[5.0, 1.0, 3.0]), 3.0);
        assert_eq!(trim_sample(&[1.0, 2.0, 3.0], 0.0).len(), 3);
    }

    #[test]
    fn gumbel_fit_recovers_parameters() {
        let mut rng = SeedStream::new(8).replicate(0);
        let (mu, beta) = (1.5, 0.7);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random();
                mu - beta * (-u.ln()).ln()
            })
            .collect();
        let fit = fit_gumbel(&xs).unwrap();
        assert!((fit.location - mu).abs() < 0.01, "{fit:?}");
        assert!((fit.scale - beta).abs() < 0.01, "{fit:?}");
        assert!(fit.ks_distance < 0.01);
    }
}
