//! Multilevel k-way partitioning: coarsen, grow on the coarsest level, project back.
//!
//! The objective is the edge cut `|E| − Σ|E_i|` subject to
//! `|V_i| ≤ (1+ε)·⌈|V|/k⌉` for every part. Balance is enforced on node weight
//! during growth and validated on node count after projection; a violation
//! triggers a boundary rebalance pass before the final check.

mod coarsen;
mod grow;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use coarsen::{coarsen, heaviest_partner, match_level, CoarseGraph, CoarsenOptions};
pub use grow::{balance_cap, partition_coarse, CoarseAssignment};

use crate::error::{GadError, Result};
use crate::graph::Graph;
use crate::rng::{self, stage};

/// Node-to-part assignment with its quality metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partitioning {
    pub k: usize,
    pub epsilon: f64,
    pub edge_cut: usize,
    pub restarts_used: usize,
    pub assignment: Vec<usize>,
}

impl Partitioning {
    /// Validates an externally produced assignment against `g`.
    pub fn from_assignment(g: &Graph, assignment: Vec<usize>, k: usize, epsilon: f64) -> Result<Self> {
        if assignment.len() != g.num_nodes() {
            return Err(GadError::Dimension(format!(
                "assignment covers {} of {} nodes",
                assignment.len(),
                g.num_nodes()
            )));
        }
        if let Some(&p) = assignment.iter().find(|&&p| p >= k) {
            return Err(GadError::Config(format!("part id {p} out of range for k = {k}")));
        }
        Ok(Self {
            k,
            epsilon,
            edge_cut: edge_cut(g, &assignment),
            restarts_used: 0,
            assignment,
        })
    }

    pub fn part_sizes(&self) -> Vec<usize> {
        part_sizes(&self.assignment, self.k)
    }

    /// Node ids of part `i`, ascending.
    pub fn members(&self, i: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&u| self.assignment[u] == i).collect()
    }

    pub fn cap(&self) -> u64 {
        balance_cap(self.assignment.len() as u64, self.k, self.epsilon)
    }

    pub fn is_balanced(&self) -> bool {
        let cap = self.cap();
        self.part_sizes().iter().all(|&s| s as u64 <= cap)
    }

    /// max part size / ideal part size.
    pub fn imbalance(&self) -> f64 {
        let ideal = self.assignment.len() as f64 / self.k as f64;
        self.part_sizes().into_iter().max().unwrap_or(0) as f64 / ideal
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub k: usize,
    pub epsilon: f64,
    pub restarts: usize,
    pub target_fraction: f64,
    pub seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            k: 4,
            epsilon: 0.05,
            restarts: 8,
            target_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Undirected edges whose endpoints lie in different parts.
pub fn edge_cut(g: &Graph, assignment: &[usize]) -> usize {
    let mut cut = 0;
    for u in 0..g.num_nodes() {
        for &v in g.neighbors(u) {
            if u < v && assignment[u] != assignment[v] {
                cut += 1;
            }
        }
    }
    cut
}

pub fn part_sizes(assignment: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    for &p in assignment {
        sizes[p] += 1;
    }
    sizes
}

/// Moves boundary nodes out of over-full parts until every part fits under `cap`.
///
/// Each move picks, in the largest over-full part, the node/target pair with
/// the best cut gain among adjacent under-full parts (ties: lowest node id,
/// then lowest part id). A part with no such node sheds its lowest-id node to
/// the globally lightest part.
fn rebalance(g: &Graph, assignment: &mut [usize], k: usize, cap: usize) -> usize {
    let mut sizes = part_sizes(assignment, k);
    let mut moves = 0;
    let mut links = vec![0i64; k];
    while let Some(over) = (0..k).filter(|&p| sizes[p] > cap).max_by_key(|&p| (sizes[p], std::cmp::Reverse(p))) {
        let mut best: Option<(i64, usize, usize)> = None;
        for u in (0..g.num_nodes()).filter(|&u| assignment[u] == over) {
            links.iter_mut().for_each(|x| *x = 0);
            for &v in g.neighbors(u) {
                links[assignment[v]] += 1;
            }
            for q in 0..k {
                if q == over || sizes[q] >= cap || links[q] == 0 {
                    continue;
                }
                let gain = links[q] - links[over];
                if best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, u, q));
                }
            }
        }
        let (u, q) = match best {
            Some((_, u, q)) => (u, q),
            None => {
                let u = (0..g.num_nodes()).find(|&u| assignment[u] == over).expect("over-full part has nodes");
                let q = (0..k).min_by_key(|&p| (sizes[p], p)).expect("k >= 1");
                (u, q)
            }
        };
        assignment[u] = q;
        sizes[over] -= 1;
        sizes[q] += 1;
        moves += 1;
    }
    moves
}

/// Projects a coarsest-level assignment down to the original nodes, recomputes
/// the cut and enforces the count-based balance constraint.
pub fn uncoarsen(
    g: &Graph,
    levels: &[CoarseGraph],
    coarse_assignment: &[usize],
    k: usize,
    epsilon: f64,
) -> Result<Partitioning> {
    let mut assignment = coarse_assignment.to_vec();
    for level in levels.iter().rev() {
        assignment = level
            .fine_to_coarse()
            .iter()
            .map(|&c| {
                assignment.get(c).copied().ok_or_else(|| {
                    GadError::Internal(format!("fine node maps to missing coarse node {c}"))
                })
            })
            .collect::<Result<_>>()?;
    }
    if assignment.len() != g.num_nodes() {
        return Err(GadError::Internal(format!(
            "projection produced {} labels for {} nodes",
            assignment.len(),
            g.num_nodes()
        )));
    }
    let cap = balance_cap(g.num_nodes() as u64, k, epsilon) as usize;
    let moves = rebalance(g, &mut assignment, k, cap);
    if moves > 0 {
        log::info!("rebalance moved {moves} node(s)");
    }
    let sizes = part_sizes(&assignment, k);
    if sizes.iter().any(|&s| s == 0 || s > cap) {
        return Err(GadError::Internal(format!(
            "partition violates balance or leaves a part empty: sizes {sizes:?}, cap {cap}"
        )));
    }
    Ok(Partitioning {
        k,
        epsilon,
        edge_cut: edge_cut(g, &assignment),
        restarts_used: 0,
        assignment,
    })
}

/// Full multilevel pipeline. Deterministic in `(g, cfg)`.
pub fn partition_graph(g: &Graph, cfg: &PartitionConfig) -> Result<Partitioning> {
    let n = g.num_nodes();
    if cfg.k == 0 || cfg.k > n {
        return Err(GadError::Config(format!("k = {} must lie in 1..={n}", cfg.k)));
    }
    if !(cfg.target_fraction > 0.0 && cfg.target_fraction < 1.0) {
        return Err(GadError::Config("target_fraction must lie in (0, 1)".into()));
    }
    if cfg.epsilon < 0.0 {
        return Err(GadError::Config("epsilon must be >= 0".into()));
    }
    let cap = balance_cap(n as u64, cfg.k, cfg.epsilon);
    if (cfg.k as u64) * cap < n as u64 {
        return Err(GadError::InfeasibleBalance {
            k: cfg.k,
            cap,
            total: n as u64,
        });
    }
    let base = CoarseGraph::from_graph(g);
    let opts = CoarsenOptions {
        target_fraction: cfg.target_fraction,
        max_node_weight: cap,
        min_nodes: cfg.k,
    };
    let levels = coarsen(&base, &opts, cfg.seed);
    let coarsest = levels.last().unwrap_or(&base);
    let coarse = partition_coarse(coarsest, cfg.k, cfg.epsilon, cfg.restarts, cfg.seed, n as u64)?;
    let mut p = uncoarsen(g, &levels, &coarse.assignment, cfg.k, cfg.epsilon)?;
    p.restarts_used = cfg.restarts;
    Ok(p)
}

/// Uniformly random assignment with part sizes differing by at most one.
pub fn random_balanced_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, stage::RESTART, u64::MAX));
    let mut assignment = vec![0; n];
    for (i, &u) in order.iter().enumerate() {
        assignment[u] = i % k;
    }
    assignment
}
