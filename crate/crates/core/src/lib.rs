//! Kingman coalescent genealogies under forward Moran dynamics.
//!
//! Lengths are in evolutionary units (each pair of lineages coalesces at rate
//! 1); the Moran dynamics run on the generations clock, where `h` generations
//! correspond to `h/n` evolutionary time.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod birthdeath;
pub mod error;
pub mod exactdist;
pub mod genealogy;
pub mod moran;
pub mod mutations;
pub mod oracle;
pub mod seeding;
pub mod stats;

pub use birthdeath::{
    bd_moment, bd_pgf, bd_pmf, disagreement_probability, simulate_bd, simulate_coupled_family,
    BdPmf, CouplingTrace, Estimate, EventClass,
};
pub use error::{Error, Result};
pub use genealogy::{sample_kingman, BranchSummary, Genealogy, Level, LevelTable, Node, NodeId};
pub use moran::{normalize, DecompositionReport, EvolvingState, MoranEvent, OrderShare};
pub use mutations::sprinkle_mutations;
pub use oracle::{enumerate_chains, Exact, TopologyChain};
pub use seeding::{ReplicateRng, SeedStream};
pub use stats::{Accumulator, LagGrid, PairAccumulator};
