//! The critical linear birth–death process (birth and death rates `k/2` in
//! state `k`) and its coupling with Moran family sizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{invalid, Result};
use crate::seeding::SeedStream;

/// Probability generating function `F(s, h) = 1 − (1−s)/(1 + h/2 − hs/2)` of
/// the process started from one individual.
pub fn bd_pgf(s: f64, h: f64) -> Result<f64> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(invalid!("time must be finite and non-negative, got {h}"));
    }
    let denom = 1.0 + h / 2.0 - h * s / 2.0;
    if denom == 0.0 {
        return Err(invalid!(
            "s = {s} is the pole of the generating function at h = {h}"
        ));
    }
    Ok(1.0 - (1.0 - s) / denom)
}

/// Truncated law of the state at time `h` started from `ancestors` individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct BdPmf {
    pub h: f64,
    pub ancestors: usize,
    /// `probs[k] = P(B_h = k)` for `k = 0..=kmax`.
    pub probs: Vec<f64>,
    /// Mass missing from `probs` (computed as a complement, clamped at 0).
    pub tail: f64,
    /// Analytic upper bound on the mass beyond `kmax`.
    pub tail_bound: f64,
}

impl BdPmf {
    pub fn kmax(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.probs.get(k).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

fn validate_bd_args(ancestors: usize, h: f64) -> Result<()> {
    if ancestors == 0 {
        return Err(invalid!("need at least one ancestor"));
    }
    if !(h >= 0.0) || !h.is_finite() {
        return Err(invalid!("time must be finite and non-negative, got {h}"));
    }
    Ok(())
}

/// `P(B_h > kmax)` is at most this for `ancestors` independent copies.
fn tail_bound(ancestors: usize, h: f64, kmax: usize) -> f64 {
    let u = h / (h + 2.0);
    let per = kmax / ancestors;
    ancestors as f64 * 2.0 * u.powi(per as i32) / (h + 2.0)
}

/// Smallest truncation point (at least `ancestors`) whose tail bound is below `1e-12`.
pub fn default_kmax(ancestors: usize, h: f64) -> usize {
    let mut k = ancestors.max(1);
    while tail_bound(ancestors, h, k) >= 1e-12 {
        k += ancestors;
    }
    k
}

/// Exact law of `B_h` given `B_0 = ancestors`, truncated at `kmax`
/// (default: [`default_kmax`]).
pub fn bd_pmf(ancestors: usize, h: f64, kmax: Option<usize>) -> Result<BdPmf> {
    validate_bd_args(ancestors, h)?;
    let kmax = match kmax {
        Some(0) => return Err(invalid!("truncation point must be at least 1")),
        Some(k) => k,
        None => default_kmax(ancestors, h),
    };
    let u = h / (h + 2.0);
    let q = 2.0 / (h + 2.0);
    let mut single = vec![0.0; kmax + 1];
    single[0] = u;
    let mut term = q * q;
    for p in single.iter_mut().skip(1) {
        *p = term;
        term *= u;
    }
    let mut probs = single.clone();
    for _ in 1..ancestors {
        let mut next = vec![0.0; kmax + 1];
        for (a, &pa) in probs.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (b, &pb) in single.iter().enumerate().take(kmax + 1 - a) {
                next[a + b] += pa * pb;
            }
        }
        probs = next;
    }
    let mass = kahan_sum(probs.iter().copied());
    Ok(BdPmf {
        h,
        ancestors,
        tail: (1.0 - mass).max(0.0),
        tail_bound: tail_bound(ancestors, h, kmax).min(1.0),
        probs,
    })
}

/// `P(B_h = 1 | B_0 = i) = i·(h/(h+2))^{i−1}·(2/(h+2))²`.
pub fn single_survivor_probability(ancestors: usize, h: f64) -> f64 {
    let u = h / (h + 2.0);
    let q = 2.0 / (h + 2.0);
    ancestors as f64 * u.powi(ancestors as i32 - 1) * q * q
}

/// `E[B_h^d]` given `B_0 = ancestors`, exact via factorial moments.
pub fn bd_moment(ancestors: usize, h: f64, d: u32) -> Result<f64> {
    validate_bd_args(ancestors, h)?;
    if d == 0 {
        return Err(invalid!("moment order must be at least 1"));
    }
    let d = d as usize;
    // E[(B)_m] / m! is the x^m coefficient of (1 + x/(1 − cx))^i.
    let c = h / 2.0;
    let mut base = vec![0.0; d + 1];
    base[0] = 1.0;
    for (m, b) in base.iter_mut().enumerate().skip(1) {
        *b = c.powi(m as i32 - 1);
    }
    let mut power = vec![0.0; d + 1];
    power[0] = 1.0;
    for _ in 0..ancestors {
        let mut next = vec![0.0; d + 1];
        for (a, &pa) in power.iter().enumerate() {
            for (b, &pb) in base.iter().enumerate().take(d + 1 - a) {
                next[a + b] += pa * pb;
            }
        }
        power = next;
    }
    // Stirling numbers of the second kind, row d.
    let mut stirling = vec![vec![0.0f64; d + 1]; d + 1];
    stirling[0][0] = 1.0;
    for row in 1..=d {
        for m in 1..=row {
            stirling[row][m] = m as f64 * stirling[row - 1][m] + stirling[row - 1][m - 1];
        }
    }
    let mut moment = 0.0;
    let mut factorial = 1.0;
    for m in 1..=d {
        factorial *= m as f64;
        moment += stirling[d][m] * factorial * power[m];
    }
    Ok(moment)
}

/// One jump of a birth–death path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdJump {
    pub time: f64,
    pub state: u64,
}

/// Simulates the process for duration `h` and returns the terminal state.
pub fn simulate_bd<R: Rng + ?Sized>(ancestors: u64, h: f64, rng: &mut R) -> u64 {
    run_bd(ancestors, h, rng, |_| {})
}

/// Like [`simulate_bd`], also returning every jump.
pub fn simulate_bd_path<R: Rng + ?Sized>(
    ancestors: u64,
    h: f64,
    rng: &mut R,
) -> (u64, Vec<BdJump>) {
    let mut path = Vec::new();
    let end = run_bd(ancestors, h, rng, |j| path.push(j));
    (end, path)
}

fn run_bd<R: Rng + ?Sized, F: FnMut(BdJump)>(start: u64, h: f64, rng: &mut R, mut sink: F) -> u64 {
    let mut k = start;
    let mut t = 0.0;
    while k > 0 {
        t += rng.sample::<f64, _>(Exp1) / k as f64;
        if t > h {
            break;
        }
        if rng.random_bool(0.5) {
            k += 1;
        } else {
            k -= 1;
        }
        sink(BdJump { time: t, state: k });
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventClass {
    /// Member of the tracked family against an outsider.
    Alpha,
    /// Two members of the tracked family.
    Beta,
}

/// One event of the coupled family dynamics. Members are 0-based indices into
/// the tracked family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledEvent {
    /// Generations time.
    pub time: f64,
    /// Time-changed clock value at the event.
    pub theta: f64,
    pub class: EventClass,
    /// Member whose Moran family size moves by `delta`.
    pub member: usize,
    pub delta: i8,
    /// Alpha: member whose `Y` moves by `delta`. Beta: member moving by `-delta`.
    pub partner: usize,
}

/// A jump of the coupled birth–death family on its own clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BJump {
    pub theta: f64,
    pub member: usize,
    pub delta: i8,
}

/// Joint realisation of Moran family sizes `Z`, their β-free version `Y`, the
/// clock `θ` and the coupled birth–death processes `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTrace {
    pub n: usize,
    pub members: usize,
    pub h: f64,
    /// Events in time order, including those after `h` needed to run `B` up to `h`.
    pub events: Vec<CoupledEvent>,
    /// `Z^j_h`.
    pub z_at_h: Vec<u32>,
    /// `Y^j_h`.
    pub y_at_h: Vec<u32>,
    /// `θ_h`.
    pub theta_h: f64,
    /// First time the family fills the population, if seen during the run.
    pub tau: Option<f64>,
    pub theta_tau: Option<f64>,
    /// Jumps of `B` after `θ_τ`, driven independently of the Moran dynamics.
    pub extension: Vec<BJump>,
    /// `B^j_h`.
    pub b_at_h: Vec<u32>,
}

impl CouplingTrace {
    /// Jumps of `B` in clock order: the time-changed `Y` jumps, then the extension.
    pub fn b_jumps(&self) -> Vec<BJump> {
        self.events
            .iter()
            .filter(|e| e.class == EventClass::Alpha)
            .map(|e| BJump {
                theta: e.theta,
                member: e.partner,
                delta: e.delta,
            })
            .chain(self.extension.iter().copied())
            .collect()
    }

    /// `B^A` at clock value `theta`, by replaying jumps.
    pub fn b_total_at(&self, theta: f64) -> i64 {
        self.members as i64
            + self
                .b_jumps()
                .iter()
                .filter(|j| j.theta <= theta)
                .map(|j| j.delta as i64)
                .sum::<i64>()
    }

    /// Checks every pathwise identity of the coupling by replaying the event log.
    /// Returns a description of each violation.
    pub fn verify(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let m = self.members;
        let mut z = vec![1i64; m];
        let mut y = vec![1i64; m];
        let mut last_theta = 0.0;
        let mut last_time = 0.0;
        let mut z_h = None;
        for (idx, e) in self.events.iter().enumerate() {
            if e.time > self.h && z_h.is_none() {
                z_h = Some(z.clone());
            }
            let filled = z.iter().sum::<i64>() == self.n as i64;
            if e.time < last_time {
                errors.push(format!("event {idx}: time goes backwards"));
            }
            if !filled && e.time > last_time && e.theta <= last_theta {
                errors.push(format!("event {idx}: clock not strictly increasing"));
            }
            last_time = e.time;
            last_theta = e.theta;
            match e.class {
                EventClass::Alpha => {
                    z[e.member] += e.delta as i64;
                    y[e.partner] += e.delta as i64;
                }
                EventClass::Beta => {
                    z[e.member] += e.delta as i64;
                    z[e.partner] -= e.delta as i64;
                }
            }
            if z.iter().chain(&y).any(|&v| v < 0) {
                errors.push(format!("event {idx}: negative family size"));
            }
            let (za, ya): (i64, i64) = (z.iter().sum(), y.iter().sum());
            if za != ya {
                errors.push(format!("event {idx}: Z^A = {za} but Y^A = {ya}"));
            }
            if self.tau.is_none_or(|tau| e.time <= tau) && self.b_total_at(e.theta) != za {
                errors.push(format!("event {idx}: B^A(theta) differs from Z^A"));
            }
        }
        let z_h = z_h.unwrap_or(z);
        if z_h
            .iter()
            .map(|&v| v as u32)
            .ne(self.z_at_h.iter().copied())
        {
            errors.push("recorded Z_h does not match the event log".into());
        }
        if self.h > 0.0 && !(self.theta_h < self.h) {
            errors.push(format!(
                "theta_h = {} is not below h = {}",
                self.theta_h, self.h
            ));
        }
        if self.h == 0.0 && self.theta_h != 0.0 {
            errors.push("theta_0 is not 0".into());
        }
        if self.tau.is_none_or(|tau| self.h <= tau) {
            let za: i64 = self.z_at_h.iter().map(|&v| v as i64).sum();
            if self.b_total_at(self.theta_h) != za {
                errors.push(format!(
                    "B^A(theta_h) = {} but Z^A_h = {za}",
                    self.b_total_at(self.theta_h)
                ));
            }
        }
        let b_end: i64 = self.b_at_h.iter().map(|&v| v as i64).sum();
        if self.b_total_at(self.h) != b_end {
            errors.push("recorded B_h does not match its jumps".into());
        }
        errors
    }
}

/// Mutable state of the coupled simulation.
struct Family {
    n: usize,
    z: Vec<u32>,
    y: Vec<u32>,
    total: u64,
    /// Σ z_j², maintained for the β rate.
    z_sq: u64,
}

impl Family {
    fn new(n: usize, members: usize) -> Self {
        Self {
            n,
            z: vec![1; members],
            y: vec![1; members],
            total: members as u64,
            z_sq: members as u64,
        }
    }

    fn alpha_rate(&self) -> f64 {
        (self.total * (self.n as u64 - self.total)) as f64 / self.n as f64
    }

    fn beta_rate(&self) -> f64 {
        (self.total * self.total - self.z_sq) as f64 / (2.0 * self.n as f64)
    }

    fn slope(&self) -> f64 {
        1.0 - self.total as f64 / self.n as f64
    }

    fn bump_z(&mut self, j: usize, delta: i8) {
        let old = self.z[j] as u64;
        let new = (old as i64 + delta as i64) as u64;
        self.z_sq = self.z_sq + new * new - old * old;
        self.z[j] = new as u32;
    }

    /// Index `j` with `Σ_{<j} w ≤ target < Σ_{≤j} w`.
    fn pick(weights: &[u32], mut target: u64) -> usize {
        for (j, &w) in weights.iter().enumerate() {
            if target < w as u64 {
                return j;
            }
            target -= w as u64;
        }
        unreachable!("target beyond total weight")
    }

    /// One event; returns (class, member, delta, partner).
    fn step<R: Rng + ?Sized>(
        &mut self,
        alpha: f64,
        total_rate: f64,
        rng: &mut R,
    ) -> (EventClass, usize, i8, usize) {
        if rng.random::<f64>() * total_rate < alpha {
            let delta: i8 = if rng.random_bool(0.5) { 1 } else { -1 };
            // a shared uniform picks the member for Z and for Y
            let u = rng.random_range(0..self.total);
            let zj = Self::pick(&self.z, u);
            let yj = Self::pick(&self.y, u);
            self.bump_z(zj, delta);
            self.y[yj] = (self.y[yj] as i64 + delta as i64) as u32;
            self.total = (self.total as i64 + delta as i64) as u64;
            (EventClass::Alpha, zj, delta, yj)
        } else {
            // ordered pair of distinct members, weight z_j z_k: j reproduces, k dies
            let pairs = self.total * self.total - self.z_sq;
            let mut target = rng.random_range(0..pairs);
            for j in 0..self.z.len() {
                let row = self.z[j] as u64 * (self.total - self.z[j] as u64);
                if target < row {
                    let mut t = target / self.z[j] as u64;
                    for k in 0..self.z.len() {
                        if k == j {
                            continue;
                        }
                        if t < self.z[k] as u64 {
                            self.bump_z(j, 1);
                            self.bump_z(k, -1);
                            return (EventClass::Beta, j, 1, k);
                        }
                        t -= self.z[k] as u64;
                    }
                }
                target -= row;
            }
            unreachable!("beta pair beyond total weight")
        }
    }
}

/// Outcome of a coupled run without the event log.
struct CoupledOutcome {
    z_at_h: Vec<u32>,
    y_at_h: Vec<u32>,
    theta_h: f64,
    tau: Option<f64>,
    theta_tau: Option<f64>,
    b_at_h: Vec<u32>,
}

fn run_coupled<R: Rng + ?Sized, F: FnMut(CoupledEvent)>(
    n: usize,
    members: usize,
    h: f64,
    rng: &mut R,
    mut record: F,
    mut record_extension: impl FnMut(BJump),
) -> CoupledOutcome {
    let mut fam = Family::new(n, members);
    let mut t = 0.0;
    let mut theta = 0.0;
    let mut snapshot: Option<(Vec<u32>, Vec<u32>, f64)> = None;
    let mut tau = None;
    let mut theta_tau = None;
    if h == 0.0 {
        snapshot = Some((fam.z.clone(), fam.y.clone(), 0.0));
    }
    // B is read off Y until the clock reaches h or the family fills the population.
    let mut b_done: Option<Vec<u32>> = if h == 0.0 { Some(fam.y.clone()) } else { None };
    while b_done.is_none() {
        if fam.total == n as u64 && tau.is_none() {
            tau = Some(t);
            theta_tau = Some(theta);
        }
        let alpha = fam.alpha_rate();
        let rate = alpha + fam.beta_rate();
        let wait = if rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        };
        let slope = fam.slope();
        if snapshot.is_none() && t + wait > h {
            // memoryless: restart the clock at h
            theta += slope * (h - t);
            t = h;
            snapshot = Some((fam.z.clone(), fam.y.clone(), theta));
            continue;
        }
        // θ never overtakes the generations clock, so B settles only after h
        if snapshot.is_some() && (slope == 0.0 || theta + slope * wait >= h) {
            b_done = Some(fam.y.clone());
            break;
        }
        t += wait;
        theta += slope * wait;
        let (class, member, delta, partner) = fam.step(alpha, rate, rng);
        record(CoupledEvent {
            time: t,
            theta,
            class,
            member,
            delta,
            partner,
        });
    }
    let (z_at_h, y_at_h, theta_h) = snapshot.expect("snapshot taken");
    let mut b_at_h = b_done.expect("B settled");
    if let Some(tt) = theta_tau {
        if tt < h {
            let mut sub = ChaCha8Rng::from_seed(rng.random());
            for (j, b) in b_at_h.iter_mut().enumerate() {
                let mut prev = *b as u64;
                let end = run_bd(prev, h - tt, &mut sub, |jump| {
                    let delta = if jump.state > prev { 1 } else { -1 };
                    prev = jump.state;
                    record_extension(BJump {
                        theta: tt + jump.time,
                        member: j,
                        delta,
                    })
                });
                *b = end as u32;
            }
        }
    }
    CoupledOutcome {
        z_at_h,
        y_at_h,
        theta_h,
        tau,
        theta_tau,
        b_at_h,
    }
}

fn validate_family(n: usize, members: usize, h: f64) -> Result<()> {
    if members == 0 || members >= n {
        return Err(invalid!(
            "tracked family size must be in 1..{n}, got {members}"
        ));
    }
    if !(h >= 0.0) || !h.is_finite() {
        return Err(invalid!("time must be finite and non-negative, got {h}"));
    }
    Ok(())
}

/// Simulates the family sizes of `members` time-0 individuals in a Moran
/// population of size `n` for `h` generations, with the coupled birth–death
/// processes. Only the family size matters by exchangeability.
pub fn simulate_coupled_family<R: Rng + ?Sized>(
    n: usize,
    members: usize,
    h: f64,
    rng: &mut R,
) -> Result<CouplingTrace> {
    validate_family(n, members, h)?;
    let mut events = Vec::new();
    let mut extension = Vec::new();
    let out = run_coupled(
        n,
        members,
        h,
        rng,
        |e| events.push(e),
        |j| extension.push(j),
    );
    Ok(CouplingTrace {
        n,
        members,
        h,
        events,
        z_at_h: out.z_at_h,
        y_at_h: out.y_at_h,
        theta_h: out.theta_h,
        tau: out.tau,
        theta_tau: out.theta_tau,
        extension,
        b_at_h: out.b_at_h,
    })
}

/// Estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `P(1{Z^{A'}_h = 1} ≠ 1{B^{A'}_h = 1})`, where `A'`
/// holds the first `sub_members` of a tracked family of `members`.
pub fn disagreement_probability(
    n: usize,
    members: usize,
    sub_members: usize,
    h: f64,
    replicates: u64,
    seed: u64,
) -> Result<Estimate> {
    validate_family(n, members, h)?;
    if sub_members == 0 || sub_members > members {
        return Err(invalid!(
            "sub-family size must be in 1..={members}, got {sub_members}"
        ));
    }
    if replicates < 2 {
        return Err(invalid!("need at least 2 replicates"));
    }
    let streams = SeedStream::new(seed).derive("disagreement");
    let hits = streams.fold(
        replicates,
        || 0u64,
        |acc, rng, _| {
            let out = run_coupled(n, members, h, rng, |_| {}, |_| {});
            let z: u32 = out.z_at_h[..sub_members].iter().sum();
            let b: u32 = out.b_at_h[..sub_members].iter().sum();
            if (z == 1) != (b == 1) {
                *acc += 1;
            }
        },
        |a, b| *a += b,
    );
    let p = hits as f64 / replicates as f64;
    Ok(Estimate {
        value: p,
        stderr: (p * (1.0 - p) / replicates as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rng(i: u64) -> crate::seeding::ReplicateRng {
        SeedStream::new(31).replicate(i)
    }

    #[test]
    fn pgf_values() {
        assert_relative_eq!(bd_pgf(0.3, 0.0).unwrap(), 0.3);
        assert_relative_eq!(bd_pgf(0.0, 2.0).unwrap(), 0.5);
        for h in [0.0, 0.5, 2.0, 10.0] {
            assert_relative_eq!(bd_pgf(1.0, h).unwrap(), 1.0);
        }
        assert!(bd_pgf(2.0, 2.0).is_err());
        assert!(bd_pgf(0.5, -1.0).is_err());
    }

    #[test]
    fn pmf_examples() {
        let p = bd_pmf(1, 2.0, None).unwrap();
        assert_relative_eq!(p.prob(0), 0.5);
        assert_relative_eq!(p.prob(1), 0.25);
        let p = bd_pmf(2, 2.0, None).unwrap();
        assert_relative_eq!(p.prob(1), 0.25);
        let p = bd_pmf(3, 0.0, None).unwrap();
        assert_eq!(p.prob(3), 1.0);
        assert_eq!(p.mass(), 1.0);
        assert!(bd_pmf(0, 1.0, None).is_err());
        assert!(bd_pmf(1, 1.0, Some(0)).is_err());
    }

    #[test]
    fn pmf_mass_and_tail() {
        for i in [1, 2, 5, 12] {
            for h in [0.1, 1.0, 2.0, 10.0] {
                let p = bd_pmf(i, h, None).unwrap();
                assert!(p.probs.iter().all(|&x| x >= 0.0));
                let total = p.mass() + p.tail;
                assert!((1.0 - 1e-12..=1.0 + 1e-15).contains(&total), "{total}");
                assert!(p.tail <= p.tail_bound + 1e-15);
                assert!(p.tail_bound < 1e-12);
            }
        }
    }

    /// Closed form: Binomial(i, q) survivors, each Geometric(q) on {1, 2, ...}.
    fn negative_binomial_pmf(i: usize, h: f64, k: usize) -> f64 {
        let u = h / (h + 2.0);
        let q = 1.0 - u;
        if k == 0 {
            return u.powi(i as i32);
        }
        let choose = |a: usize, b: usize| -> f64 {
            if b > a {
                return 0.0;
            }
            (0..b).fold(1.0, |acc, t| acc * (a - t) as f64 / (t + 1) as f64)
        };
        (1..=i.min(k))
            .map(|s| {
                choose(i, s)
                    * q.powi(s as i32)
                    * u.powi((i - s) as i32)
                    * choose(k - 1, s - 1)
                    * q.powi(s as i32)
                    * u.powi((k - s) as i32)
            })
            .sum()
    }

    #[test]
    fn convolution_matches_closed_form() {
        for i in 1..=6 {
            for h in [0.3, 2.0, 7.0] {
                let p = bd_pmf(i, h, None).unwrap();
                for k in 0..=p.kmax() {
                    assert_relative_eq!(
                        p.prob(k),
                        negative_binomial_pmf(i, h, k),
                        epsilon = 1e-14,
                        max_relative = 1e-10
                    );
                }
                assert_relative_eq!(
                    p.prob(1),
                    single_survivor_probability(i, h),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn moments() {
        for (i, h) in [(1, 2.0), (3, 0.5), (4, 1.0)] {
            assert_relative_eq!(bd_moment(i, h, 1).unwrap(), i as f64, max_relative = 1e-12);
        }
        assert_relative_eq!(bd_moment(1, 2.0, 2).unwrap(), 3.0, max_relative = 1e-12);
        assert_relative_eq!(bd_moment(2, 2.0, 2).unwrap(), 8.0, max_relative = 1e-12);
        for (i, h, d) in [(1, 2.0, 3), (2, 1.5, 4), (5, 0.7, 3)] {
            let p = bd_pmf(i, h, Some(2000)).unwrap();
            let direct: f64 = p
                .probs
                .iter()
                .enumerate()
                .map(|(k, &q)| q * (k as f64).powi(d as i32))
                .sum();
            assert_relative_eq!(bd_moment(i, h, d).unwrap(), direct, max_relative = 1e-10);
        }
        assert!(bd_moment(1, 1.0, 0).is_err());
    }

    #[test]
    fn simulation_matches_pmf() {
        let reps = 200_000u64;
        let (mut zero, mut one, mut sum4) = (0u64, 0u64, 0u64);
        for r in 0..reps {
            match simulate_bd(1, 2.0, &mut rng(r)) {
                0 => zero += 1,
                1 => one += 1,
                _ => {}
            }
            sum4 += simulate_bd(4, 1.0, &mut rng(reps + r));
        }
        let check = |count: u64, p: f64| {
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((count as f64 / reps as f64 - p).abs() < 4.0 * se);
        };
        check(zero, 0.5);
        check(one, 0.25);
        // Var B_1 from 4 ancestors is 4h
        let mean = sum4 as f64 / reps as f64;
        assert!(
            (mean - 4.0).abs() < 4.0 * (4.0 / reps as f64).sqrt(),
            "{mean}"
        );
    }

    #[test]
    fn path_is_consistent() {
        let (end, path) = simulate_bd_path(3, 5.0, &mut rng(9));
        assert_eq!(path.last().map_or(3, |j| j.state), end);
        assert!(path
            .windows(2)
            .all(|w| w[0].time < w[1].time && w[0].state.abs_diff(w[1].state) == 1));
    }

    #[test]
    fn coupling_identities_hold() {
        for members in [1, 2, 5] {
            for r in 0..300 {
                let tr = simulate_coupled_family(100, members, 2.0, &mut rng(r)).unwrap();
                let errors = tr.verify();
                assert!(errors.is_empty(), "{errors:?}");
            }
        }
        // small populations fill up quickly and exercise the extension
        let mut filled = 0;
        for r in 0..2000 {
            let tr = simulate_coupled_family(4, 3, 3.0, &mut rng(r)).unwrap();
            assert!(tr.verify().is_empty(), "{:?}", tr.verify());
            if tr.theta_tau.is_some_and(|t| t < 3.0) {
                filled += 1;
            }
        }
        assert!(filled > 0);
    }

    #[test]
    fn coupling_at_time_zero() {
        let tr = simulate_coupled_family(10, 3, 0.0, &mut rng(0)).unwrap();
        assert_eq!(tr.theta_h, 0.0);
        assert_eq!(tr.b_at_h, vec![1, 1, 1]);
        assert_eq!(tr.z_at_h, vec![1, 1, 1]);
        assert!(tr.verify().is_empty());
        assert!(simulate_coupled_family(10, 10, 1.0, &mut rng(0)).is_err());
        assert!(simulate_coupled_family(10, 0, 1.0, &mut rng(0)).is_err());
        let d = disagreement_probability(50, 4, 2, 0.0, 100, 1).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn coupled_process_is_critical_birth_death() {
        let reps = 100_000u64;
        let ones = (0..reps)
            .filter(|&r| {
                simulate_coupled_family(100, 1, 2.0, &mut rng(r))
                    .unwrap()
                    .b_at_h[0]
                    == 1
            })
            .count() as f64;
        let p = ones / reps as f64;
        assert!(
            (p - 0.25).abs() < 4.0 * (0.25 * 0.75 / reps as f64).sqrt(),
            "{p}"
        );
    }

    #[test]
    fn disjoint_subfamilies_are_independent() {
        let reps = 100_000u64;
        let (mut a, mut b, mut ab) = (0.0, 0.0, 0.0);
        for r in 0..reps {
            let tr = simulate_coupled_family(20, 2, 1.5, &mut rng(r)).unwrap();
            let x = (tr.b_at_h[0] == 1) as u8 as f64;
            let y = (tr.b_at_h[1] == 1) as u8 as f64;
            a += x;
            b += y;
            ab += x * y;
        }
        let m = reps as f64;
        let cov = ab / m - (a / m) * (b / m);
        let (pa, pb) = (a / m, b / m);
        let se = (pa * (1.0 - pa) * pb * (1.0 - pb) / m).sqrt();
        assert!(cov.abs() < 4.0 * se, "cov {cov} se {se}");
    }

    #[test]
    fn disagreement_shrinks_with_n() {
        let small = disagreement_probability(50, 3, 3, 1.0, 100_000, 5).unwrap();
        let large = disagreement_probability(400, 3, 3, 1.0, 100_000, 5).unwrap();
        assert!(small.value > large.value + 3.0 * (small.stderr + large.stderr));
    }
}
