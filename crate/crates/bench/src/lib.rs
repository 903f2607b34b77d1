//! Shared fixtures for the benchmarks.

use kingman_core::{sample_kingman, EvolvingState, Genealogy, ReplicateRng, SeedStream};

/// Generator for benchmark inputs; fixed so runs are comparable.
pub fn fixture_rng(tag: u64) -> ReplicateRng {
    SeedStream::new(0xbe4c).replicate(tag)
}

pub fn fixture_tree(n: usize) -> Genealogy {
    sample_kingman(n, &mut fixture_rng(n as u64)).expect("n >= 2")
}

pub fn fixture_state(n: usize) -> EvolvingState {
    EvolvingState::from_tree(fixture_tree(n))
}
