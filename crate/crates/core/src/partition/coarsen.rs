//! Heavy-edge matching coarsening.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{GadError, Result};
use crate::graph::Graph;
use crate::rng::{self, stage};

const UNMATCHED: usize = usize::MAX;

/// One level of the multilevel hierarchy: a node- and edge-weighted graph plus
/// the map from the previous (finer) level's node ids onto this level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoarseGraph {
    node_weights: Vec<u64>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    edge_weights: Vec<u64>,
    fine_to_coarse: Vec<usize>,
}

impl CoarseGraph {
    /// Level 0: every node and edge has weight 1; the fine map is the identity.
    pub fn from_graph(g: &Graph) -> Self {
        let n = g.num_nodes();
        Self {
            node_weights: vec![1; n],
            offsets: g.offsets().to_vec(),
            targets: g.targets().to_vec(),
            edge_weights: vec![1; g.targets().len()],
            fine_to_coarse: (0..n).collect(),
        }
    }

    /// Builds a weighted graph directly; parallel edges are summed, loops dropped.
    pub fn from_weighted(node_weights: Vec<u64>, edges: &[(usize, usize, u64)]) -> Result<Self> {
        let n = node_weights.len();
        let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
        for &(u, v, w) in edges {
            for id in [u, v] {
                if id >= n {
                    return Err(GadError::NodeOutOfRange { id, num_nodes: n });
                }
            }
            if u != v {
                adj[u].push((v, w));
                adj[v].push((u, w));
            }
        }
        let mut offsets = vec![0];
        let mut targets = Vec::new();
        let mut edge_weights = Vec::new();
        for list in &mut adj {
            list.sort_unstable();
            for &(v, w) in list.iter() {
                if targets.len() > *offsets.last().unwrap() && *targets.last().unwrap() == v {
                    *edge_weights.last_mut().unwrap() += w;
                } else {
                    targets.push(v);
                    edge_weights.push(w);
                }
            }
            offsets.push(targets.len());
        }
        Ok(Self {
            node_weights,
            offsets,
            targets,
            edge_weights,
            fine_to_coarse: (0..n).collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node_weights.len()
    }

    pub fn node_weight(&self, u: usize) -> u64 {
        self.node_weights[u]
    }

    pub fn node_weights(&self) -> &[u64] {
        &self.node_weights
    }

    pub fn total_node_weight(&self) -> u64 {
        self.node_weights.iter().sum()
    }

    /// `(neighbor, edge weight)` pairs, sorted by neighbor.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let r = self.offsets[u]..self.offsets[u + 1];
        self.targets[r.clone()].iter().copied().zip(self.edge_weights[r].iter().copied())
    }

    pub fn edge_weight(&self, u: usize, v: usize) -> u64 {
        self.neighbors(u).find(|&(x, _)| x == v).map_or(0, |(_, w)| w)
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn fine_to_coarse(&self) -> &[usize] {
        &self.fine_to_coarse
    }

    /// Sum of weights of edges whose endpoints carry different labels.
    pub fn weighted_cut(&self, assignment: &[usize]) -> u64 {
        let mut cut = 0;
        for u in 0..self.num_nodes() {
            for (v, w) in self.neighbors(u) {
                if u < v && assignment[u] != assignment[v] {
                    cut += w;
                }
            }
        }
        cut
    }
}

/// Options bounding the coarsening loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoarsenOptions {
    /// Stop once the node count is at most this fraction of the original.
    pub target_fraction: f64,
    /// Never form a coarse node heavier than this.
    pub max_node_weight: u64,
    /// Never produce a level with fewer nodes than this.
    pub min_nodes: usize,
}

impl CoarsenOptions {
    pub fn new(target_fraction: f64) -> Self {
        Self {
            target_fraction,
            max_node_weight: u64::MAX,
            min_nodes: 1,
        }
    }
}

/// Heaviest unmatched neighbor of `u` whose merge stays under `max_node_weight`;
/// ties go to the lowest id.
pub fn heaviest_partner(cg: &CoarseGraph, u: usize, matched: &[usize], max_node_weight: u64) -> Option<usize> {
    let mut best: Option<(u64, usize)> = None;
    for (v, w) in cg.neighbors(u) {
        if v == u || matched[v] != UNMATCHED {
            continue;
        }
        if cg.node_weights[u].saturating_add(cg.node_weights[v]) > max_node_weight {
            continue;
        }
        // neighbors come sorted, so strict `>` keeps the lowest id on ties
        if best.is_none_or(|(bw, _)| w > bw) {
            best = Some((w, v));
        }
    }
    best.map(|(_, v)| v)
}

/// Contracts one level, visiting nodes in `order`.
pub fn match_level(cg: &CoarseGraph, order: &[usize], max_node_weight: u64) -> CoarseGraph {
    let n = cg.num_nodes();
    let mut mate = vec![UNMATCHED; n];
    for &u in order {
        if mate[u] != UNMATCHED {
            continue;
        }
        match heaviest_partner(cg, u, &mate, max_node_weight) {
            Some(v) => {
                mate[u] = v;
                mate[v] = u;
            }
            None => mate[u] = u,
        }
    }

    let mut cmap = vec![UNMATCHED; n];
    let mut members: Vec<(usize, usize)> = Vec::new();
    for u in 0..n {
        if cmap[u] == UNMATCHED {
            let v = mate[u];
            cmap[u] = members.len();
            cmap[v] = members.len();
            members.push((u, v));
        }
    }

    let nc = members.len();
    let mut node_weights = Vec::with_capacity(nc);
    let mut offsets = Vec::with_capacity(nc + 1);
    let mut targets = Vec::new();
    let mut edge_weights = Vec::new();
    let mut slot = vec![UNMATCHED; nc];
    offsets.push(0);
    for (c, &(a, b)) in members.iter().enumerate() {
        node_weights.push(if a == b {
            cg.node_weights[a]
        } else {
            cg.node_weights[a] + cg.node_weights[b]
        });
        let start = targets.len();
        let fine = if a == b { vec![a] } else { vec![a, b] };
        for f in fine {
            for (v, w) in cg.neighbors(f) {
                let cv = cmap[v];
                if cv == c {
                    continue;
                }
                if slot[cv] == UNMATCHED {
                    slot[cv] = targets.len();
                    targets.push(cv);
                    edge_weights.push(w);
                } else {
                    edge_weights[slot[cv]] += w;
                }
            }
        }
        let mut row: Vec<(usize, u64)> = targets[start..]
            .iter()
            .copied()
            .zip(edge_weights[start..].iter().copied())
            .collect();
        row.sort_unstable();
        for (i, (t, w)) in row.into_iter().enumerate() {
            slot[t] = UNMATCHED;
            targets[start + i] = t;
            edge_weights[start + i] = w;
        }
        offsets.push(targets.len());
    }
    CoarseGraph {
        node_weights,
        offsets,
        targets,
        edge_weights,
        fine_to_coarse: cmap,
    }
}

fn shuffled_order(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// Repeated heavy-edge matching, coarsest level last.
///
/// Stops once the node count drops to `target_fraction` of the base level's,
/// when a level would shrink by less than 5% (stall guard for matching-resistant
/// graphs such as stars), or when the next level would fall below
/// `min_nodes`. An empty result means no contraction was possible.
pub fn coarsen(base: &CoarseGraph, opts: &CoarsenOptions, seed: u64) -> Vec<CoarseGraph> {
    let target = opts.target_fraction * base.num_nodes() as f64;
    let mut levels: Vec<CoarseGraph> = Vec::new();
    loop {
        let current = levels.last().unwrap_or(base);
        let prev = current.num_nodes();
        if prev as f64 <= target {
            break;
        }
        let mut rng = rng::stream(seed, stage::COARSEN, levels.len() as u64);
        let order = shuffled_order(prev, &mut rng);
        let next = match_level(current, &order, opts.max_node_weight);
        let shrink = prev - next.num_nodes();
        if shrink == 0 || next.num_nodes() < opts.min_nodes {
            break;
        }
        levels.push(next);
        if (shrink as f64) < 0.05 * prev as f64 {
            break;
        }
    }
    levels
}
