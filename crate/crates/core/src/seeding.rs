//! Deterministic per-replicate random streams and replicate-parallel drivers.
//!
//! Every replicate draws from its own ChaCha8 stream keyed by
//! `(master seed, replicate index)`, so results do not depend on how
//! replicates are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Generator used for every replicate.
pub type ReplicateRng = ChaCha8Rng;

/// Number of replicates folded sequentially before results are merged.
pub const BLOCK: u64 = 2048;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A master seed, optionally specialised by a tag per experiment or sub-task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { key: master }
    }

    /// Independent stream family for a named sub-task.
    pub fn derive(&self, tag: &str) -> Self {
        // FNV-1a of the tag, then mixed with the parent key
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        for b in tag.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0100_0000_01b3);
        }
        Self {
            key: splitmix64(self.key ^ splitmix64(hash)),
        }
    }

    /// Same as [`derive`](Self::derive) with a numeric tag.
    pub fn derive_index(&self, index: u64) -> Self {
        Self {
            key: splitmix64(self.key ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Generator for replicate `index`.
    pub fn replicate(&self, index: u64) -> ReplicateRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(index);
        rng
    }

    /// Runs `f` once per replicate in parallel and returns results in index order.
    pub fn map<T, F>(&self, reps: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&mut ReplicateRng, u64) -> T + Sync + Send,
    {
        (0..reps)
            .into_par_iter()
            .map(|idx| {
                let mut rng = self.replicate(idx);
                f(&mut rng, idx)
            })
            .collect()
    }

    /// Folds replicates into per-block accumulators (fixed block boundaries),
    /// then merges the blocks in index order. The result is independent of the
    /// number of worker threads.
    pub fn fold<A, I, F, M>(&self, reps: u64, init: I, step: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(&mut A, &mut ReplicateRng, u64) + Sync + Send,
        M: Fn(&mut A, A),
    {
        let blocks = reps.div_ceil(BLOCK);
        let parts: Vec<A> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = init();
                let end = ((b + 1) * BLOCK).min(reps);
                for idx in b * BLOCK..end {
                    let mut rng = self.replicate(idx);
                    step(&mut acc, &mut rng, idx);
                }
                acc
            })
            .collect();
        let mut total = init();
        for part in parts {
            merge(&mut total, part);
        }
        total
    }
}
