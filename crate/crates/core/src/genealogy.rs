//! Static Kingman genealogies: sampling, level structure and branch summaries.
//!
//! Time runs in evolutionary units (pair coalescence rate 1). Leaves sit at the
//! observation time of the tree (0 for a freshly sampled tree) and internal
//! nodes at strictly earlier, pairwise distinct timestamps.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{invalid, Error, Result};

pub type NodeId = usize;

/// Sentinel for "no node".
const NONE: NodeId = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub parent: Option<NodeId>,
    /// `None` for leaves; internal nodes are binary.
    pub children: Option<[NodeId; 2]>,
    /// Evolutionary timestamp. For leaves this equals the tree's observation time.
    pub time: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Timestamped binary tree of a population sample.
///
/// Leaves carry labels `1..=n`; `leaf(label)` maps a label to its node.
#[derive(Debug, Clone, PartialEq)]
pub struct Genealogy {
    pub(crate) nodes: Vec<Node>,
    /// `leaves[label - 1]` is the node carrying that label.
    pub(crate) leaves: Vec<NodeId>,
    /// Inverse of `leaves` (`usize::MAX` for internal nodes).
    pub(crate) label_of: Vec<usize>,
    pub(crate) root: NodeId,
    pub(crate) observation_time: f64,
}

/// Merger-order description of a genealogy, one entry per level `k = n..=2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    /// Number of blocks (branches) present at this level.
    pub k: usize,
    /// Duration `X_k` of the level.
    pub duration: f64,
    /// Block-size multiset of `Π_k` as `(size, count)` pairs, sorted by size.
    pub blocks: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    pub n: usize,
    /// Levels ordered from `k = n` down to `k = 2`.
    pub levels: Vec<Level>,
}

impl LevelTable {
    /// `c_{i,k}`: number of blocks of size `i` at level `k`.
    pub fn count(&self, i: usize, k: usize) -> usize {
        if k < 2 || k > self.n {
            return 0;
        }
        let level = &self.levels[self.n - k];
        level
            .blocks
            .binary_search_by_key(&i, |&(size, _)| size)
            .map(|pos| level.blocks[pos].1)
            .unwrap_or(0)
    }

    pub fn duration(&self, k: usize) -> f64 {
        self.levels[self.n - k].duration
    }

    /// Total length of each order: `out[i - 1] = Σ_k c_{i,k} X_k` for `i = 1..n-1`.
    pub fn order_lengths(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n - 1];
        for level in &self.levels {
            for &(size, count) in &level.blocks {
                if size < self.n {
                    out[size - 1] += count as f64 * level.duration;
                }
            }
        }
        out
    }

    /// `Σ_k k X_k`.
    pub fn total_length(&self) -> f64 {
        self.levels.iter().map(|l| l.k as f64 * l.duration).sum()
    }
}

/// One non-root branch: the order (leaf count) of the subtree below it, the
/// level `K` at which it is formed and the level `J` at which it ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSummary {
    pub order: usize,
    pub initial_level: usize,
    pub final_level: usize,
    pub length: f64,
    /// Node at the lower end of the branch; identifies the leaf set.
    pub node: NodeId,
}

/// Draws a Kingman `n`-coalescent with all leaves at time 0.
///
/// At level `k` the waiting time is `Exp(C(k,2))` and an unordered pair of the
/// `k` blocks merges uniformly at random. Leaves get node ids `0..n` (label
/// `id + 1`) and internal nodes are numbered in merger order, so every child id
/// is smaller than its parent's.
pub fn sample_kingman<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Genealogy> {
    if n < 2 {
        return Err(invalid!("sample size must be at least 2, got {n}"));
    }
    let mut nodes = Vec::with_capacity(2 * n - 1);
    for _ in 0..n {
        nodes.push(Node {
            parent: None,
            children: None,
            time: 0.0,
        });
    }
    let mut active: Vec<NodeId> = (0..n).collect();
    let mut now = 0.0f64;
    for k in (2..=n).rev() {
        let rate = (k * (k - 1)) as f64 / 2.0;
        // an exact tie would break the strict ordering; resample (never happens in practice)
        let next = loop {
            let x: f64 = rng.sample::<f64, _>(Exp1) / rate;
            let t = now - x;
            if t < now {
                break t;
            }
        };
        now = next;
        let a = rng.random_range(0..k);
        let mut b = rng.random_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        let id = nodes.len();
        let (ca, cb) = (active[a], active[b]);
        nodes.push(Node {
            parent: None,
            children: Some([ca, cb]),
            time: now,
        });
        nodes[ca].parent = Some(id);
        nodes[cb].parent = Some(id);
        active[a] = id;
        active.swap_remove(b);
    }
    let root = nodes.len() - 1;
    let mut label_of = vec![NONE; nodes.len()];
    for (i, slot) in label_of.iter_mut().take(n).enumerate() {
        *slot = i;
    }
    Ok(Genealogy {
        nodes,
        leaves: (0..n).collect(),
        label_of,
        root,
        observation_time: 0.0,
    })
}

impl Genealogy {
    /// Number of leaves.
    pub fn n(&self) -> usize {
        self.leaves.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn observation_time(&self) -> f64 {
        self.observation_time
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Node carrying leaf label `label` (1-based).
    pub fn leaf(&self, label: usize) -> NodeId {
        self.leaves[label - 1]
    }

    /// Leaf node ids in label order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    /// Label (1-based) of a leaf node.
    pub fn label(&self, id: NodeId) -> Option<usize> {
        match self.label_of.get(id) {
            Some(&l) if l != NONE => Some(l + 1),
            _ => None,
        }
    }

    /// Timestamp of a node; leaves report the observation time.
    pub fn time(&self, id: NodeId) -> f64 {
        let node = &self.nodes[id];
        if node.is_leaf() {
            self.observation_time
        } else {
            node.time
        }
    }

    /// Length of the branch above `id` (zero for the root).
    pub fn branch_length(&self, id: NodeId) -> f64 {
        match self.nodes[id].parent {
            Some(p) => self.time(id) - self.nodes[p].time,
            None => 0.0,
        }
    }

    /// Sum of the external branch lengths.
    pub fn external_length(&self) -> f64 {
        let t = self.observation_time;
        self.leaves
            .iter()
            .map(|&leaf| match self.nodes[leaf].parent {
                Some(p) => t - self.nodes[p].time,
                None => 0.0,
            })
            .sum()
    }

    /// Sum of all branch lengths.
    pub fn total_length(&self) -> f64 {
        self.node_ids().map(|id| self.branch_length(id)).sum()
    }

    /// Ids of the nodes currently in the tree (`2n - 1` of them).
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        // all slots are live: trees never carry free slots
        0..self.nodes.len()
    }

    /// Internal nodes ordered by merger: the first merger (closest to the
    /// leaves, level `n -> n-1`) comes first.
    pub fn mergers(&self) -> Vec<NodeId> {
        let mut internal: Vec<NodeId> = self
            .node_ids()
            .filter(|&id| !self.nodes[id].is_leaf())
            .collect();
        internal.sort_by(|&a, &b| self.nodes[b].time.total_cmp(&self.nodes[a].time));
        internal
    }

    /// Nodes in an order where every child precedes its parent.
    pub fn postorder(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, false)];
        while let Some((id, expanded)) = stack.pop() {
            match self.nodes[id].children {
                Some([a, b]) if !expanded => {
                    stack.push((id, true));
                    stack.push((b, false));
                    stack.push((a, false));
                }
                _ => order.push(id),
            }
        }
        order
    }

    /// Number of leaves below each node, indexed by node id.
    pub fn subtree_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.nodes.len()];
        for id in self.postorder() {
            sizes[id] = match self.nodes[id].children {
                None => 1,
                Some([a, b]) => sizes[a] + sizes[b],
            };
        }
        sizes
    }

    /// Labels of the leaves below `id`, sorted.
    pub fn leaf_set(&self, id: NodeId) -> Vec<usize> {
        let mut labels = Vec::new();
        let mut stack = vec![id];
        while let Some(v) = stack.pop() {
            match self.nodes[v].children {
                None => labels.push(self.label(v).expect("leaf without label")),
                Some([a, b]) => {
                    stack.push(a);
                    stack.push(b);
                }
            }
        }
        labels.sort_unstable();
        labels
    }

    /// Merger sequence with level durations and block-size profiles.
    pub fn level_table(&self) -> LevelTable {
        let n = self.n();
        let sizes = self.subtree_sizes();
        let mergers = self.mergers();
        let mut counts = vec![0usize; n + 1];
        counts[1] = n;
        let mut levels = Vec::with_capacity(n - 1);
        let mut upper = self.observation_time;
        for (m, &id) in mergers.iter().enumerate() {
            let k = n - m;
            let blocks = counts
                .iter()
                .enumerate()
                .filter(|&(_, &c)| c > 0)
                .map(|(size, &c)| (size, c))
                .collect();
            let t = self.nodes[id].time;
            levels.push(Level {
                k,
                duration: upper - t,
                blocks,
            });
            upper = t;
            let [a, b] = self.nodes[id].children.expect("merger is internal");
            counts[sizes[a]] -= 1;
            counts[sizes[b]] -= 1;
            counts[sizes[id]] += 1;
        }
        LevelTable { n, levels }
    }

    /// One summary per non-root branch (`2n - 2` entries).
    pub fn branch_summaries(&self) -> Vec<BranchSummary> {
        let n = self.n();
        let sizes = self.subtree_sizes();
        // level reached after a node's merger: the m-th merger (1-based) leaves n - m blocks
        let mut level_after = vec![n; self.nodes.len()];
        for (m, &id) in self.mergers().iter().enumerate() {
            level_after[id] = n - (m + 1);
        }
        self.node_ids()
            .filter_map(|id| {
                let parent = self.nodes[id].parent?;
                Some(BranchSummary {
                    order: sizes[id],
                    initial_level: level_after[id],
                    final_level: level_after[parent],
                    length: self.time(id) - self.nodes[parent].time,
                    node: id,
                })
            })
            .collect()
    }

    /// Full structural check of the tree invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let fail = |msg: String| Err(Error::Invariant(msg));
        if self.nodes.len() != 2 * n - 1 {
            return fail(format!("{} nodes for {n} leaves", self.nodes.len()));
        }
        if self.nodes[self.root].parent.is_some() {
            return fail("root has a parent".into());
        }
        let mut leaf_count = 0;
        let mut roots = 0;
        let mut internal_times = Vec::with_capacity(n - 1);
        for id in self.node_ids() {
            let node = &self.nodes[id];
            match node.parent {
                None => roots += 1,
                Some(p) => {
                    let pc = match self.nodes.get(p).and_then(|pn| pn.children) {
                        Some(c) => c,
                        None => return fail(format!("parent {p} of {id} is not internal")),
                    };
                    if !pc.contains(&id) {
                        return fail(format!("{p} does not list child {id}"));
                    }
                }
            }
            match node.children {
                None => {
                    leaf_count += 1;
                    if self.label(id).is_none() {
                        return fail(format!("leaf {id} has no label"));
                    }
                    if let Some(p) = node.parent {
                        if self.nodes[p].time > self.observation_time {
                            return fail(format!("leaf {id} older than its parent"));
                        }
                    }
                }
                Some([a, b]) => {
                    if a == b {
                        return fail(format!("node {id} has a repeated child"));
                    }
                    for c in [a, b] {
                        if self.nodes[c].parent != Some(id) {
                            return fail(format!("child {c} does not point back to {id}"));
                        }
                        if !self.nodes[c].is_leaf() && self.nodes[c].time <= node.time {
                            return fail(format!("internal node {c} not younger than parent {id}"));
                        }
                    }
                    internal_times.push(node.time);
                }
            }
        }
        if leaf_count != n || roots != 1 {
            return fail(format!("{leaf_count} leaves and {roots} roots"));
        }
        for (label0, &leaf) in self.leaves.iter().enumerate() {
            if self.label_of[leaf] != label0 {
                return fail(format!("label map inconsistent at label {}", label0 + 1));
            }
        }
        internal_times.sort_by(f64::total_cmp);
        if internal_times.windows(2).any(|w| w[0] == w[1]) {
            return fail("duplicate internal timestamps".into());
        }
        if self.postorder().len() != self.nodes.len() {
            return fail("tree is not connected".into());
        }
        Ok(())
    }

    /// Line-based dump, one node per line: `id parent time label`, with `-`
    /// for a missing parent or label.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for id in self.node_ids() {
            let parent = self.nodes[id]
                .parent
                .map_or_else(|| "-".to_string(), |p| p.to_string());
            let label = self
                .label(id)
                .map_or_else(|| "-".to_string(), |l| l.to_string());
            writeln!(out, "{id}\t{parent}\t{:e}\t{label}", self.time(id)).unwrap();
        }
        out
    }

    /// Parses the output of [`to_text`](Self::to_text).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(invalid!("line {}: expected 4 fields", lineno + 1));
            }
            let parse_opt = |s: &str| -> Result<Option<usize>> {
                if s == "-" {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| invalid!("line {}: bad integer {s:?}", lineno + 1))
                }
            };
            let id: usize = fields[0]
                .parse()
                .map_err(|_| invalid!("line {}: bad id", lineno + 1))?;
            let time: f64 = fields[2]
                .parse()
                .map_err(|_| invalid!("line {}: bad time", lineno + 1))?;
            rows.push((id, parse_opt(fields[1])?, time, parse_opt(fields[3])?));
        }
        let len = rows.len();
        if len < 3 || len % 2 == 0 {
            return Err(invalid!(
                "{len} nodes cannot form a binary tree with n >= 2"
            ));
        }
        let n = len.div_ceil(2);
        let mut nodes = vec![
            Node {
                parent: None,
                children: None,
                time: 0.0
            };
            len
        ];
        let mut child_lists: Vec<Vec<NodeId>> = vec![Vec::new(); len];
        let mut leaves = vec![NONE; n];
        let mut label_of = vec![NONE; len];
        let mut observation_time = None;
        for &(id, parent, time, label) in &rows {
            if id >= len {
                return Err(invalid!("node id {id} out of range"));
            }
            nodes[id].parent = parent;
            nodes[id].time = time;
            if let Some(p) = parent {
                if p >= len {
                    return Err(invalid!("parent id {p} out of range"));
                }
                child_lists[p].push(id);
            }
            if let Some(l) = label {
                if l == 0 || l > n || leaves[l - 1] != NONE {
                    return Err(invalid!("bad or duplicate label {l}"));
                }
                leaves[l - 1] = id;
                label_of[id] = l - 1;
                observation_time = Some(time);
            }
        }
        for (id, kids) in child_lists.into_iter().enumerate() {
            match kids.len() {
                0 => {}
                2 => nodes[id].children = Some([kids[0], kids[1]]),
                c => return Err(invalid!("node {id} has {c} children")),
            }
        }
        let root = (0..len)
            .find(|&id| nodes[id].parent.is_none())
            .ok_or_else(|| invalid!("no root"))?;
        let tree = Genealogy {
            nodes,
            leaves,
            label_of,
            root,
            observation_time: observation_time.unwrap_or(0.0),
        };
        tree.validate().map_err(|e| invalid!("{e}"))?;
        Ok(tree)
    }
}
