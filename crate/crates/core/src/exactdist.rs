//! Closed-form laws and moments of the Kingman coalescent and the limit
//! covariance of the evolving external length.
//!
//! Factorial ratios are evaluated as running products of ratios so that the
//! intermediate values stay near 1.

use crate::error::{invalid, Error, Result};

/// Limit covariance of the normalized external length at lag `h` (generations):
/// `(2/(2+h))²`.
pub fn cov_target(h: f64) -> f64 {
    let c = 2.0 / (2.0 + h);
    c * c
}

/// `C(n, k)` in floating point.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, t| acc * (n - t) as f64 / (t + 1) as f64)
}

fn pairs(m: usize) -> f64 {
    (m * (m - 1)) as f64 / 2.0
}

fn check_order(n: usize, i: usize) -> Result<()> {
    if n < 2 || i == 0 || i >= n {
        return Err(invalid!("order must be in 1..{n}, got {i}"));
    }
    Ok(())
}

/// `P(J = j)` for the final level of the branch carrying a fixed leaf set of
/// size `i`; the event `J = j` includes the branch existing.
pub fn level_pmf_j(n: usize, i: usize, j: usize) -> Result<f64> {
    check_order(n, i)?;
    if j == 0 || j >= n {
        return Err(invalid!("level must be in 1..{n}, got {j}"));
    }
    if j > n - i {
        return Ok(0.0);
    }
    // 2j / C(n,i) · (n−j−1)! / ((n−1)⋯(n−i) · (n−j−i)!)
    let mut p = 2.0 * j as f64 / binomial(n, i) / (n - i) as f64;
    for m in 1..i {
        p *= (n - j - i + m) as f64 / (n - i + m) as f64;
    }
    Ok(p)
}

/// `P(K = k, J = j)` for the branch carrying a fixed leaf set of size `i ≥ 2`.
pub fn level_pmf_kj(n: usize, i: usize, k: usize, j: usize) -> Result<f64> {
    check_order(n, i)?;
    if i < 2 {
        return Err(invalid!("order-1 branches always start at level n"));
    }
    if j == 0 || j >= k || k > n {
        return Err(invalid!(
            "levels must satisfy 1 <= j < k <= n, got j={j}, k={k}"
        ));
    }
    if k + 1 > n || n - k - 1 < i - 2 {
        return Ok(0.0);
    }
    // C(n−k−1, i−2) · ∏_{m=2}^{i} C(m,2) / ∏_{m=n−i+1}^{n} C(m,2) · j
    let mut p = binomial(n - k - 1, i - 2) * j as f64 / pairs(n - i + 1);
    for m in 2..=i {
        p *= pairs(m) / pairs(n - i + m);
    }
    Ok(p)
}

/// `η_i = E ℒ^{n,i} = 2/i`.
pub fn eta(i: usize) -> f64 {
    2.0 / i as f64
}

/// Expected length of the branch carrying a fixed leaf set of size `i`:
/// `(2/i) / C(n,i)`.
pub fn expected_branch_length(n: usize, i: usize) -> Result<f64> {
    check_order(n, i)?;
    Ok(eta(i) / binomial(n, i))
}

/// `E[2/J_A; A supported]` for `|A| = i`.
pub fn expected_weight(n: usize, i: usize) -> Result<f64> {
    check_order(n, i)?;
    let mut total = 0.0;
    for j in 1..=n - i {
        total += 2.0 / j as f64 * level_pmf_j(n, i, j)?;
    }
    Ok(total)
}

/// `Σ_{j=1}^{m−1} 1/j` (note: `m − 1` terms).
pub fn harmonic(m: usize) -> f64 {
    (1..m).rev().map(|j| 1.0 / j as f64).sum()
}

/// `β_n(i) = 2n/((n−i+1)(n−i)) · (h_{n+1} − h_i) − 2/(n−i)`.
pub fn beta_n(n: usize, i: usize) -> f64 {
    let (nf, d) = (n as f64, (n - i) as f64);
    // h_{n+1} − h_i summed directly to avoid cancellation
    let diff: f64 = (i..=n).rev().map(|j| 1.0 / j as f64).sum();
    2.0 * nf / ((d + 1.0) * d) * diff - 2.0 / d
}

/// Second moments of the order lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuMoments {
    pub n: usize,
    pub i: usize,
    pub other: Option<usize>,
    /// `σ_ii = β_n(i+1)`.
    pub sigma_ii: f64,
    /// `σ_ii' = (β_n(i+1) − β_n(i))/2`.
    pub sigma_cross: Option<f64>,
    /// `Var ℒ^{n,i} = 4σ_ii`.
    pub variance: f64,
    /// `Cov(ℒ^{n,i}, ℒ^{n,i'}) = 4σ_ii'`.
    pub covariance: Option<f64>,
}

/// Variance of `ℒ^{n,i}` and, when `other` is given, its covariance with
/// `ℒ^{n,other}`. Defined for `2i < n`, and for `other < i` with `2(i + other) < n`.
pub fn fu_moments(n: usize, i: usize, other: Option<usize>) -> Result<FuMoments> {
    check_order(n, i)?;
    if 2 * i >= n {
        return Err(Error::Domain(format!(
            "variance needs 2i < n, got n={n}, i={i}"
        )));
    }
    let sigma_ii = beta_n(n, i + 1);
    let sigma_cross = match other {
        None => None,
        Some(o) => {
            if o == 0 {
                return Err(invalid!("second order must be at least 1"));
            }
            if o >= i || 2 * (i + o) >= n {
                return Err(Error::Domain(format!(
                    "covariance needs i' < i and 2(i + i') < n, got n={n}, i={i}, i'={o}"
                )));
            }
            Some((beta_n(n, i + 1) - beta_n(n, i)) / 2.0)
        }
    };
    Ok(FuMoments {
        n,
        i,
        other,
        sigma_ii,
        sigma_cross,
        variance: 4.0 * sigma_ii,
        covariance: sigma_cross.map(|s| 4.0 * s),
    })
}

/// Order above which a freed branch is unlikely by time `h`:
/// `ln n / ln((h+2)/h)`.
pub fn a_threshold(n: usize, h: f64) -> Result<f64> {
    if n < 2 {
        return Err(invalid!("n must be at least 2, got {n}"));
    }
    if !(h > 0.0) {
        return Err(invalid!("threshold needs h > 0, got {h}"));
    }
    Ok((n as f64).ln() / ((h + 2.0) / h).ln())
}

/// `E(L_A | levels) = 2/J − 2/K`.
pub fn conditional_length(j: usize, k: usize) -> Result<f64> {
    if j == 0 || j >= k {
        return Err(invalid!("need 1 <= J < K, got J={j}, K={k}"));
    }
    Ok(2.0 / j as f64 - 2.0 / k as f64)
}

/// `Σ_{i>r} i u^{i−1} (1−u)²` with `u = h/(h+2)`.
pub fn thinned_tail(r: usize, h: f64) -> f64 {
    let u = h / (h + 2.0);
    let r = r as i32;
    (r + 1) as f64 * u.powi(r) - r as f64 * u.powi(r + 1)
}

/// `Σ_{i=1}^{r} i u^{i−1} (1−u)²`.
pub fn thinned_target(r: usize, h: f64) -> f64 {
    let u = h / (h + 2.0);
    let q = 1.0 - u;
    (1..=r)
        .map(|i| i as f64 * u.powi(i as i32 - 1) * q * q)
        .sum()
}

/// Untrimmed variance of the normalized external length at finite `n`:
/// `(n/(4 ln n)) · 4β_n(2)`.
pub fn normalized_variance(n: usize) -> f64 {
    let nf = n as f64;
    nf / (4.0 * nf.ln()) * 4.0 * beta_n(n, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn covariance_target() {
        assert_eq!(cov_target(0.0), 1.0);
        assert_eq!(cov_target(2.0), 0.25);
        assert!(cov_target(1e6) < 1e-10);
        assert!(cov_target(1.0) > cov_target(1.5));
    }

    #[test]
    fn final_level_examples() {
        assert_relative_eq!(
            level_pmf_j(3, 1, 2).unwrap(),
            2.0 / 3.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            level_pmf_j(3, 1, 1).unwrap(),
            1.0 / 3.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            level_pmf_j(4, 2, 1).unwrap(),
            1.0 / 9.0,
            max_relative = 1e-14
        );
        for (n, i) in [(5, 2), (6, 3), (10, 4)] {
            assert_eq!(level_pmf_j(n, i, n - i + 1).unwrap(), 0.0);
        }
        assert!(level_pmf_j(4, 0, 1).is_err());
        assert!(level_pmf_j(4, 4, 1).is_err());
        assert!(level_pmf_j(4, 1, 4).is_err());
        assert!(level_pmf_j(4, 1, 0).is_err());
    }

    #[test]
    fn joint_level_examples() {
        assert_relative_eq!(
            level_pmf_kj(4, 2, 3, 1).unwrap(),
            1.0 / 18.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            level_pmf_kj(5, 2, 4, 2).unwrap(),
            1.0 / 30.0,
            max_relative = 1e-14
        );
        assert_eq!(level_pmf_kj(4, 2, 4, 1).unwrap(), 0.0);
        assert!(level_pmf_kj(4, 1, 3, 1).is_err());
        assert!(level_pmf_kj(4, 2, 2, 2).is_err());
        assert!(level_pmf_kj(4, 2, 5, 1).is_err());
    }

    #[test]
    fn joint_marginalizes_to_final_level() {
        for n in 3..12 {
            for i in 2..n {
                for j in 1..n {
                    let joint: f64 = (j + 1..=n).map(|k| level_pmf_kj(n, i, k, j).unwrap()).sum();
                    assert_relative_eq!(
                        joint,
                        level_pmf_j(n, i, j).unwrap(),
                        epsilon = 1e-15,
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn expected_lengths() {
        assert_eq!(eta(1), 2.0);
        assert_eq!(eta(2), 1.0);
        assert_eq!(eta(4), 0.5);
        assert_relative_eq!(expected_branch_length(4, 1).unwrap(), 0.5);
        assert_relative_eq!(expected_branch_length(4, 2).unwrap(), 1.0 / 6.0);
        for n in [5, 20, 60] {
            for i in 1..n {
                let total = expected_branch_length(n, i).unwrap() * binomial(n, i);
                assert_relative_eq!(total, eta(i), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn fu_examples() {
        let m = fu_moments(3, 1, None).unwrap();
        assert_relative_eq!(m.sigma_ii, 0.5, max_relative = 1e-14);
        assert_relative_eq!(m.variance, 2.0, max_relative = 1e-14);
        assert_relative_eq!(
            fu_moments(4, 1, None).unwrap().variance,
            16.0 / 9.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            fu_moments(6, 2, None).unwrap().sigma_ii,
            17.0 / 60.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            fu_moments(7, 2, Some(1)).unwrap().covariance.unwrap(),
            -47.0 / 300.0,
            max_relative = 1e-12
        );
        assert!(matches!(fu_moments(4, 2, None), Err(Error::Domain(_))));
        assert!(matches!(fu_moments(6, 2, Some(1)), Err(Error::Domain(_))));
        assert!(matches!(fu_moments(20, 2, Some(3)), Err(Error::Domain(_))));
    }

    #[test]
    fn fu_cross_terms_are_non_positive() {
        for n in 5..80 {
            for i in 2..n {
                for o in 1..i {
                    if let Ok(m) = fu_moments(n, i, Some(o)) {
                        assert!(m.sigma_cross.unwrap() <= 0.0, "n={n} i={i} i'={o}");
                    }
                }
            }
        }
    }

    #[test]
    fn harmonic_convention() {
        assert_eq!(harmonic(1), 0.0);
        assert_eq!(harmonic(2), 1.0);
        assert_relative_eq!(harmonic(4), 11.0 / 6.0);
    }

    #[test]
    fn threshold() {
        assert_relative_eq!(a_threshold(1024, 2.0).unwrap(), 10.0, max_relative = 1e-14);
        assert!(a_threshold(100, 4.0).unwrap() > a_threshold(100, 2.0).unwrap());
        assert!(a_threshold(100, 0.0).is_err());
        assert!(a_threshold(1, 1.0).is_err());
        assert_relative_eq!(a_threshold(8, 2.0).unwrap(), 3.0, max_relative = 1e-14);
    }

    #[test]
    fn conditional_lengths() {
        assert_eq!(conditional_length(1, 2).unwrap(), 1.0);
        assert_relative_eq!(
            conditional_length(1, 1_000_000).unwrap(),
            2.0,
            epsilon = 1e-5
        );
        assert_relative_eq!(conditional_length(2, 4).unwrap(), 1.0 / 3.0 + 1.0 / 6.0);
        assert!(conditional_length(3, 3).is_err());
        assert!(conditional_length(0, 3).is_err());
    }

    #[test]
    fn thinned_weights() {
        for h in [0.5, 1.0, 2.0, 5.0] {
            assert_relative_eq!(thinned_target(4000, h), 1.0, max_relative = 1e-10);
            for r in [1, 5, 12] {
                assert_relative_eq!(
                    thinned_target(r, h) + thinned_tail(r, h),
                    1.0,
                    max_relative = 1e-12
                );
            }
        }
        // r = 12, h = 2: tail = 13/2^12 − 12/2^13
        assert_relative_eq!(
            thinned_tail(12, 2.0),
            13.0 / 4096.0 - 12.0 / 8192.0,
            max_relative = 1e-14
        );
        // only the first order survives at h = 0, and the first-order weight is cov_target
        assert_eq!(thinned_target(1, 0.0), 1.0);
        assert_relative_eq!(thinned_target(1, 2.0), cov_target(2.0));
    }

    #[test]
    fn finite_n_variance() {
        let v = normalized_variance(2000);
        assert!((1.6..1.66).contains(&v), "{v}");
    }
}
