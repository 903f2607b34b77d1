//! Infinite-sites mutations sprinkled on a genealogy.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{invalid, Result};
use crate::genealogy::Genealogy;

/// Drops Poisson(`phi/2 · length`) mutations on every branch and counts them by
/// branch order. Entry `i − 1` holds `M_i`, for `i = 1..n−1`.
pub fn sprinkle_mutations<R: Rng + ?Sized>(
    tree: &Genealogy,
    phi: f64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if !(phi > 0.0) || !phi.is_finite() {
        return Err(invalid!(
            "mutation rate must be positive and finite, got {phi}"
        ));
    }
    let n = tree.n();
    let sizes = tree.subtree_sizes();
    let mut counts = vec![0u64; n - 1];
    for id in tree.node_ids() {
        if id == tree.root() {
            continue;
        }
        let mean = phi / 2.0 * tree.branch_length(id);
        if mean > 0.0 {
            let draw: f64 = Poisson::new(mean)
                .map_err(|e| invalid!("bad Poisson mean {mean}: {e}"))?
                .sample(rng);
            counts[sizes[id] - 1] += draw as u64;
        }
    }
    Ok(counts)
}
