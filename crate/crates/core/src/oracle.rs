//! Exhaustive enumeration of labeled coalescent histories for small samples,
//! with exact rational probabilities.

use std::collections::BTreeMap;

use num_rational::Ratio;

use crate::error::{invalid, Error, Result};

pub type Exact = Ratio<i128>;

/// Largest sample size the enumeration accepts.
pub const MAX_N: usize = 7;

/// Blocks are bitmasks over labels `1..=n` (bit `label − 1`).
pub type Block = u32;

/// One labeled history: partitions from `n` singletons down to one block.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologyChain {
    /// `partitions[t]` has `n − t` blocks, sorted ascending.
    pub partitions: Vec<Vec<Block>>,
    pub probability: Exact,
}

impl TopologyChain {
    pub fn n(&self) -> usize {
        self.partitions[0].len()
    }

    /// Partition at level `k` (with `k` blocks).
    pub fn level(&self, k: usize) -> &[Block] {
        &self.partitions[self.n() - k]
    }

    /// Levels `(K, J)` of the branch carrying `set`, if it is ever a block
    /// below the root.
    pub fn levels_of(&self, set: Block) -> Option<(usize, usize)> {
        let n = self.n();
        let present: Vec<usize> = (2..=n).filter(|&k| self.level(k).contains(&set)).collect();
        let k_init = *present.iter().max()?;
        let last = *present.iter().min()?;
        Some((k_init, last - 1))
    }

    /// Number of size-`i` blocks at level `k`.
    pub fn count(&self, i: usize, k: usize) -> usize {
        self.level(k)
            .iter()
            .filter(|b| b.count_ones() as usize == i)
            .count()
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(invalid!("sample size must be at least 2, got {n}"));
    }
    if n > MAX_N {
        return Err(Error::ResourceLimit(format!(
            "enumeration is capped at n = {MAX_N}, got {n}"
        )));
    }
    Ok(())
}

fn pairs(k: usize) -> i128 {
    (k * (k - 1) / 2) as i128
}

/// Every labeled history of an `n`-coalescent, each with probability
/// `∏_{k=2}^{n} 1/C(k,2)`.
pub fn enumerate_chains(n: usize) -> Result<Vec<TopologyChain>> {
    check_n(n)?;
    let probability = Exact::new(1, (2..=n).map(pairs).product());
    let start: Vec<Block> = (0..n).map(|b| 1 << b).collect();
    let mut out = Vec::new();
    let mut stack = vec![start];
    extend(&mut stack, probability, &mut out);
    Ok(out)
}

fn extend(path: &mut Vec<Vec<Block>>, probability: Exact, out: &mut Vec<TopologyChain>) {
    let current = path.last().expect("non-empty path").clone();
    if current.len() == 1 {
        out.push(TopologyChain {
            partitions: path.clone(),
            probability,
        });
        return;
    }
    for a in 0..current.len() {
        for b in a + 1..current.len() {
            let mut next: Vec<Block> = current
                .iter()
                .enumerate()
                .filter(|&(t, _)| t != a && t != b)
                .map(|(_, &blk)| blk)
                .collect();
            next.push(current[a] | current[b]);
            next.sort_unstable();
            path.push(next);
            extend(path, probability, out);
            path.pop();
        }
    }
}

/// Exact law of `(K, J)` for the leaf set `{1..i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDistribution {
    pub n: usize,
    pub i: usize,
    /// `P(K = k, J = j)` keyed by `(k, j)`; zero entries are omitted.
    pub joint: BTreeMap<(usize, usize), Exact>,
    /// Probability that `{1..i}` is never a block.
    pub unsupported: Exact,
}

impl LevelDistribution {
    pub fn joint(&self, k: usize, j: usize) -> Exact {
        self.joint
            .get(&(k, j))
            .copied()
            .unwrap_or_else(|| Exact::from_integer(0))
    }

    pub fn final_level(&self, j: usize) -> Exact {
        self.joint
            .iter()
            .filter(|(&(_, jj), _)| jj == j)
            .map(|(_, &p)| p)
            .sum()
    }
}

fn leading_set(i: usize) -> Block {
    (1 << i) - 1
}

fn check_order(n: usize, i: usize) -> Result<()> {
    if i == 0 || i >= n {
        return Err(invalid!("order must be in 1..{n}, got {i}"));
    }
    Ok(())
}

pub fn exact_level_distribution(n: usize, i: usize) -> Result<LevelDistribution> {
    check_n(n)?;
    check_order(n, i)?;
    let set = leading_set(i);
    let mut joint = BTreeMap::new();
    let mut unsupported = Exact::from_integer(0);
    for chain in enumerate_chains(n)? {
        match chain.levels_of(set) {
            Some(kj) => {
                *joint.entry(kj).or_insert_with(|| Exact::from_integer(0)) += chain.probability
            }
            None => unsupported += chain.probability,
        }
    }
    Ok(LevelDistribution {
        n,
        i,
        joint,
        unsupported,
    })
}

/// Exact `E L_A` for `A = {1..i}`.
pub fn exact_branch_length_mean(n: usize, i: usize) -> Result<Exact> {
    check_n(n)?;
    check_order(n, i)?;
    let set = leading_set(i);
    let mut mean = Exact::from_integer(0);
    for chain in enumerate_chains(n)? {
        if let Some((k, j)) = chain.levels_of(set) {
            let length: Exact = (j + 1..=k).map(|m| Exact::new(1, pairs(m))).sum();
            mean += chain.probability * length;
        }
    }
    Ok(mean)
}

/// Exact first and second moments of the order lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderMoments {
    pub mean: Exact,
    pub variance: Exact,
    /// `Cov(ℒ^{n,i}, ℒ^{n,i'})` when a second order was requested.
    pub covariance: Option<Exact>,
}

/// Given the history, `ℒ^{n,i} = Σ_k c_{i,k} X_k` with independent
/// `X_k ~ Exp(C(k,2))`; moments follow by conditioning on the history.
pub fn exact_order_length_moments(
    n: usize,
    i: usize,
    other: Option<usize>,
) -> Result<OrderMoments> {
    check_n(n)?;
    check_order(n, i)?;
    if let Some(o) = other {
        check_order(n, o)?;
    }
    let zero = Exact::from_integer(0);
    let (mut mean, mut mean_other) = (zero, zero);
    let (mut second, mut cross) = (zero, zero);
    for chain in enumerate_chains(n)? {
        let o = other.unwrap_or(i);
        let (mut mu, mut mu_o, mut var, mut cov) = (zero, zero, zero, zero);
        for k in 2..=n {
            let rate = Exact::from_integer(pairs(k));
            let c = Exact::from_integer(chain.count(i, k) as i128);
            let c_o = Exact::from_integer(chain.count(o, k) as i128);
            mu += c / rate;
            mu_o += c_o / rate;
            var += c * c / (rate * rate);
            cov += c * c_o / (rate * rate);
        }
        let p = chain.probability;
        mean += p * mu;
        mean_other += p * mu_o;
        second += p * (var + mu * mu);
        cross += p * (cov + mu * mu_o);
    }
    Ok(OrderMoments {
        mean,
        variance: second - mean * mean,
        covariance: other.map(|_| cross - mean * mean_other),
    })
}

/// Converts an exact value to floating point.
pub fn to_f64(x: Exact) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}
