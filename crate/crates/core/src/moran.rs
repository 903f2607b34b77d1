//! Forward Moran dynamics on a live genealogy.
//!
//! Two clocks are in play. Events are driven by the generations clock `h`
//! (each unordered pair reproduces at rate `1/n`, so events arrive at total
//! rate `C(n,2)/n`), while every length is kept in evolutionary units. The live
//! tree is observed at evolutionary time `h/n`, so between events each external
//! branch grows at rate `1/n` per generation and the external length at rate 1.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{invalid, Result};
use crate::genealogy::{sample_kingman, BranchSummary, Genealogy, Node, NodeId};

/// One reproduction event: the dying individual's lineage is pruned and the
/// reproducing one splits. Labels are live-leaf labels (`1..=n`); after the
/// event the newborn occupies the dead individual's label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoranEvent {
    /// Generations timestamp.
    pub time: f64,
    pub dying: usize,
    pub reproducing: usize,
}

/// Share of the time-0 length of one order that is free at the current time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderShare {
    pub order: usize,
    /// `ℒ^{n,i}_0`.
    pub initial_length: f64,
    /// `Σ_{|A|=i} 1{Z^A = 1} L_A`.
    pub freed_length: f64,
    /// `Λ^{n,i}`; defined as 0 when the initial length is 0.
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    /// Generations time of the observation.
    pub h: f64,
    /// Orders `1..n-1`, in order.
    pub orders: Vec<OrderShare>,
    /// `I^n_{0,h}`: external length laid down after time 0.
    pub accrued_external_length: f64,
    pub external_length: f64,
    /// `external_length - (Σ freed + accrued)`.
    pub residual: f64,
    /// Freed length of orders strictly above the cutoff, when one was given.
    pub freed_above: Option<(usize, f64)>,
}

impl DecompositionReport {
    pub fn total_freed(&self) -> f64 {
        self.orders.iter().map(|o| o.freed_length).sum()
    }

    /// `|residual| / (1 + external length)`.
    pub fn relative_residual(&self) -> f64 {
        self.residual.abs() / (1.0 + self.external_length)
    }
}

/// The time-0 tree, kept immutable for decompositions.
#[derive(Debug, Clone)]
struct InitialTree {
    tree: Genealogy,
    postorder: Vec<NodeId>,
    summaries: Vec<BranchSummary>,
}

/// A Moran population together with its live genealogy and time-0 ancestry.
#[derive(Debug, Clone)]
pub struct EvolvingState {
    n: usize,
    h: f64,
    tree: Genealogy,
    /// Time-0 label (0-based) of the ancestor of each live label slot.
    ancestor: Vec<u32>,
    /// `Z^j`: number of live descendants of time-0 individual `j` (0-based).
    family_sizes: Vec<u32>,
    initial: InitialTree,
    events: u64,
    audit: bool,
}

/// `√(n / (4 ln n)) · (x − 2)`.
pub fn normalize(n: usize, x: f64) -> f64 {
    let n = n as f64;
    (n / (4.0 * n.ln())).sqrt() * (x - 2.0)
}

impl EvolvingState {
    /// Stationary start: a fresh Kingman tree at `h = 0`, every individual its
    /// own ancestor.
    pub fn init_stationary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return Err(invalid!("population size must be at least 2, got {n}"));
        }
        let tree = sample_kingman(n, rng)?;
        Ok(Self::from_tree(tree))
    }

    /// Starts the dynamics from a given time-0 genealogy.
    pub fn from_tree(tree: Genealogy) -> Self {
        let n = tree.n();
        let mut tree = tree;
        tree.observation_time = 0.0;
        let initial = InitialTree {
            postorder: tree.postorder(),
            summaries: tree.branch_summaries(),
            tree: tree.clone(),
        };
        Self {
            n,
            h: 0.0,
            tree,
            ancestor: (0..n as u32).collect(),
            family_sizes: vec![1; n],
            initial,
            events: 0,
            audit: false,
        }
    }

    /// Enables a full structural check of the live tree after every event.
    pub fn with_audit(mut self, on: bool) -> Self {
        self.audit = on;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Current generations time.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn tree(&self) -> &Genealogy {
        &self.tree
    }

    pub fn initial_tree(&self) -> &Genealogy {
        &self.initial.tree
    }

    pub fn initial_summaries(&self) -> &[BranchSummary] {
        &self.initial.summaries
    }

    /// `Z^j` for `j = 1..=n` (index `j - 1`).
    pub fn family_sizes(&self) -> &[u32] {
        &self.family_sizes
    }

    /// Time-0 label (1-based) of the ancestor of live label `label`.
    pub fn ancestor_of(&self, label: usize) -> usize {
        self.ancestor[label - 1] as usize + 1
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    pub fn external_length(&self) -> f64 {
        self.tree.external_length()
    }

    /// `I^n_{0,h}`: the part of the current external length that lies after time 0.
    pub fn accrued_external_length(&self) -> f64 {
        let t = self.tree.observation_time;
        self.tree
            .leaves
            .iter()
            .map(|&leaf| {
                let p = self.tree.nodes[leaf].parent.expect("n >= 2");
                t - self.tree.nodes[p].time.max(0.0)
            })
            .sum()
    }

    /// Runs the dynamics for `dh` generations and returns the events.
    pub fn evolve<R: Rng + ?Sized>(&mut self, dh: f64, rng: &mut R) -> Vec<MoranEvent> {
        let mut events = Vec::new();
        self.run(dh, rng, |e| events.push(e));
        events
    }

    /// Like [`evolve`](Self::evolve) without collecting events; returns their number.
    pub fn advance<R: Rng + ?Sized>(&mut self, dh: f64, rng: &mut R) -> u64 {
        let mut count = 0;
        self.run(dh, rng, |_| count += 1);
        count
    }

    fn run<R: Rng + ?Sized, F: FnMut(MoranEvent)>(&mut self, dh: f64, rng: &mut R, mut sink: F) {
        assert!(dh >= 0.0, "negative time step {dh}");
        let rate = (self.n - 1) as f64 / 2.0;
        let end = self.h + dh;
        loop {
            let wait: f64 = rng.sample::<f64, _>(Exp1) / rate;
            let next = self.h + wait;
            if next > end {
                break;
            }
            if next <= self.h {
                // zero wait after rounding; would duplicate a timestamp
                continue;
            }
            self.h = next;
            sink(self.apply_event(rng));
        }
        self.h = end;
        self.tree.observation_time = end / self.n as f64;
    }

    fn apply_event<R: Rng + ?Sized>(&mut self, rng: &mut R) -> MoranEvent {
        let n = self.n;
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let (dying, reproducing) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
        let now = self.h / n as f64;
        self.tree.observation_time = now;
        self.prune_and_split(dying, reproducing, now);

        let lost = self.ancestor[dying] as usize;
        let gained = self.ancestor[reproducing];
        self.family_sizes[lost] -= 1;
        self.family_sizes[gained as usize] += 1;
        self.ancestor[dying] = gained;
        self.events += 1;

        if self.audit {
            self.audit_state();
        }
        MoranEvent {
            time: self.h,
            dying: dying + 1,
            reproducing: reproducing + 1,
        }
    }

    /// Removes the dying leaf's external branch and splits the reproducing leaf
    /// at evolutionary time `now`. The freed node ids are reused for the new
    /// internal node and the newborn leaf, which takes over the dead slot.
    fn prune_and_split(&mut self, dying: usize, reproducing: usize, now: f64) {
        let tree = &mut self.tree;
        let d = tree.leaves[dying];
        let r = tree.leaves[reproducing];

        let p = tree.nodes[d].parent.expect("n >= 2");
        let [c0, c1] = tree.nodes[p].children.expect("parent is internal");
        let sibling = if c0 == d { c1 } else { c0 };
        match tree.nodes[p].parent {
            None => {
                tree.nodes[sibling].parent = None;
                tree.root = sibling;
            }
            Some(g) => {
                replace_child(&mut tree.nodes[g], p, sibling);
                tree.nodes[sibling].parent = Some(g);
            }
        }

        let above = tree.nodes[r].parent;
        tree.nodes[p] = Node {
            parent: above,
            children: Some([r, d]),
            time: now,
        };
        match above {
            None => tree.root = p,
            Some(q) => replace_child(&mut tree.nodes[q], r, p),
        }
        tree.nodes[r].parent = Some(p);
        tree.nodes[d] = Node {
            parent: Some(p),
            children: None,
            time: now,
        };
    }

    fn audit_state(&self) {
        if let Err(e) = self.tree.validate() {
            panic!("live tree audit failed after {} events: {e}", self.events);
        }
        let total: u64 = self.family_sizes.iter().map(|&z| z as u64).sum();
        assert_eq!(total, self.n as u64, "family sizes do not sum to n");
    }

    /// Splits the current external length into freed time-0 branches of each
    /// order plus the length accrued since time 0.
    pub fn decompose(&self, cutoff: Option<usize>) -> DecompositionReport {
        let n = self.n;
        let init = &self.initial.tree;
        let mut z = vec![0u32; init.nodes.len()];
        for &id in &self.initial.postorder {
            z[id] = match init.nodes[id].children {
                None => self.family_sizes[init.label_of[id]],
                Some([a, b]) => z[a] + z[b],
            };
        }
        let mut initial = vec![0.0; n - 1];
        let mut freed = vec![0.0; n - 1];
        for s in &self.initial.summaries {
            initial[s.order - 1] += s.length;
            if z[s.node] == 1 {
                freed[s.order - 1] += s.length;
            }
        }
        let orders: Vec<OrderShare> = (0..n - 1)
            .map(|i| OrderShare {
                order: i + 1,
                initial_length: initial[i],
                freed_length: freed[i],
                proportion: if initial[i] > 0.0 {
                    (freed[i] / initial[i]).min(1.0)
                } else {
                    0.0
                },
            })
            .collect();
        let accrued = self.accrued_external_length();
        let external = self.external_length();
        let freed_total: f64 = freed.iter().sum();
        let freed_above = cutoff.map(|r| (r, freed.iter().skip(r).sum()));
        DecompositionReport {
            h: self.h,
            orders,
            accrued_external_length: accrued,
            external_length: external,
            residual: external - (freed_total + accrued),
            freed_above,
        }
    }
}

fn replace_child(node: &mut Node, old: NodeId, new: NodeId) {
    let kids = node.children.as_mut().expect("internal node");
    if kids[0] == old {
        kids[0] = new;
    } else {
        debug_assert_eq!(kids[1], old);
        kids[1] = new;
    }
}
