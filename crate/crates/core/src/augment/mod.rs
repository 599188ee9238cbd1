//! Halo augmentation of partitions.
//!
//! For each part the boundary and its `layers`-hop halo are found, halo nodes
//! are scored by boundary-rooted random walks, and up to
//! `⌈α(1+density)|V_i|⌉` of them are replicated by depth-first selection. The
//! augmented subgraph is the subgraph induced on owned nodes plus replicas.

mod halo;
mod select;
mod walks;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use halo::{bfs_depths, boundary_nodes, candidate_replication_nodes};
pub use select::{depth_first_select, replication_budget, Selection};
pub use walks::{
    estimate_walk_count, node_importance, random_walk, ImportanceMode, ImportanceTable, MonteCarloParams, WalkCountRule,
    WalkSet,
};

use crate::error::{GadError, Result};
use crate::graph::{induce_subgraph, Graph, SubgraphView};
use crate::partition::Partitioning;
use crate::rng::{self, stage};

/// A partition's subgraph plus its replicated halo nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSubgraph {
    pub part: usize,
    pub view: SubgraphView,
    /// `(global id, owning part)` per replica, in selection order.
    pub replica_sources: Vec<(usize, usize)>,
    /// Replication budget `n(g_i)` before capping by the candidate count.
    pub budget: usize,
}

impl AugmentedSubgraph {
    pub fn num_nodes(&self) -> usize {
        self.view.num_nodes()
    }

    pub fn replicas(&self) -> impl Iterator<Item = usize> + '_ {
        self.replica_sources.iter().map(|&(v, _)| v)
    }

    pub fn to_record(&self) -> SubgraphRecord {
        SubgraphRecord {
            part: self.part,
            nodes: self.view.local_ids().to_vec(),
            owned: self.view.owned().to_vec(),
            replica_sources: self.replica_sources.clone(),
            budget: self.budget,
            edges: self.view.global_edges(),
        }
    }

    /// Rebuilds from a record, checking it against `g`.
    pub fn from_record(g: &Graph, rec: &SubgraphRecord) -> Result<Self> {
        if rec.nodes.len() != rec.owned.len() {
            return Err(GadError::Dimension("nodes/owned length mismatch".into()));
        }
        let owned: Vec<usize> = rec
            .nodes
            .iter()
            .zip(&rec.owned)
            .filter(|(_, &o)| o)
            .map(|(&v, _)| v)
            .collect();
        let view = induce_subgraph(g, &rec.nodes, &owned)?;
        if view.global_edges() != rec.edges {
            return Err(GadError::Config(format!(
                "edge list of subgraph {} does not match the dataset",
                rec.part
            )));
        }
        Ok(Self {
            part: rec.part,
            view,
            replica_sources: rec.replica_sources.clone(),
            budget: rec.budget,
        })
    }
}

/// JSON form of an [`AugmentedSubgraph`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgraphRecord {
    pub part: usize,
    pub nodes: Vec<usize>,
    pub owned: Vec<bool>,
    pub replica_sources: Vec<(usize, usize)>,
    pub budget: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Builds `g_i'`: owned nodes plus replicas and every original edge among them.
pub fn augment_subgraph(g: &Graph, p: &Partitioning, part: usize, replicas: &[usize], budget: usize) -> Result<AugmentedSubgraph> {
    let owned = p.members(part);
    let mut sources = Vec::with_capacity(replicas.len());
    for &r in replicas {
        if r >= g.num_nodes() {
            return Err(GadError::NodeOutOfRange {
                id: r,
                num_nodes: g.num_nodes(),
            });
        }
        if p.assignment[r] == part {
            return Err(GadError::Config(format!("replica {r} is owned by part {part}")));
        }
        sources.push((r, p.assignment[r]));
    }
    let mut nodes = owned.clone();
    nodes.extend_from_slice(replicas);
    let view = induce_subgraph(g, &nodes, &owned)?;
    Ok(AugmentedSubgraph {
        part,
        view,
        replica_sources: sources,
        budget,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// GCN layer count; sets both the halo radius and the walk length.
    pub layers: usize,
    pub alpha: f64,
    pub monte_carlo: MonteCarloParams,
    /// When false, every part gets zero replicas.
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            alpha: 0.01,
            monte_carlo: MonteCarloParams::default(),
            enabled: true,
        }
    }
}

/// Everything produced while augmenting one part.
#[derive(Clone, Debug, PartialEq)]
pub struct PartAugmentation {
    pub subgraph: AugmentedSubgraph,
    pub boundary: Vec<usize>,
    pub candidates: Vec<usize>,
    pub importance: ImportanceTable,
    pub truncated_walks: usize,
    pub selection: Selection,
}

/// Runs the full augmentation for one part with the RNG stream `(seed, walks, part)`.
pub fn augment_part(g: &Graph, p: &Partitioning, part: usize, cfg: &AugmentConfig, seed: u64) -> Result<PartAugmentation> {
    if cfg.layers == 0 {
        return Err(GadError::Config("layers must be >= 1".into()));
    }
    if cfg.alpha <= 0.0 {
        return Err(GadError::Config("alpha must be > 0".into()));
    }
    let owned = p.members(part);
    let own_view = induce_subgraph(g, &owned, &owned)?;
    let budget = replication_budget(&own_view, cfg.alpha);
    if !cfg.enabled {
        let subgraph = augment_subgraph(g, p, part, &[], budget)?;
        return Ok(PartAugmentation {
            subgraph,
            boundary: boundary_nodes(g, &p.assignment, part),
            candidates: candidate_replication_nodes(g, &p.assignment, part, cfg.layers),
            importance: ImportanceTable::default(),
            truncated_walks: 0,
            selection: Selection::default(),
        });
    }
    let boundary = boundary_nodes(g, &p.assignment, part);
    let candidates = candidate_replication_nodes(g, &p.assignment, part, cfg.layers);
    let mut rng = rng::stream(seed, stage::WALKS, part as u64);
    let (importance, walks) = node_importance(g, &boundary, &candidates, cfg.layers, &cfg.monte_carlo, &mut rng);
    let selection = depth_first_select(&importance, &walks, budget.min(candidates.len()));
    if selection.shortfall > 0 {
        log::info!("part {part}: walks covered {} candidate(s), short of budget by {}", selection.covered, selection.shortfall);
    }
    let subgraph = augment_subgraph(g, p, part, &selection.replicas, budget)?;
    Ok(PartAugmentation {
        subgraph,
        boundary,
        candidates,
        importance,
        truncated_walks: walks.truncated,
        selection,
    })
}

/// Augments every part in parallel; output order is by part id.
pub fn augment_all(g: &Graph, p: &Partitioning, cfg: &AugmentConfig, seed: u64) -> Result<Vec<PartAugmentation>> {
    (0..p.k).into_par_iter().map(|i| augment_part(g, p, i, cfg, seed)).collect()
}

/// Greedy load balancing: largest subgraph first, each to the worker currently
/// holding the fewest nodes (ties: lowest worker id). Returns the worker of
/// each subgraph.
pub fn assign_to_workers(sizes: &[usize], workers: usize) -> Vec<usize> {
    assert!(workers >= 1, "need at least one worker");
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(sizes[i]), i));
    let mut load = vec![0usize; workers];
    let mut owner = vec![0; sizes.len()];
    for i in order {
        let w = (0..workers).min_by_key(|&w| (load[w], w)).expect("workers >= 1");
        owner[i] = w;
        load[w] += sizes[i];
    }
    owner
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worker_assignment_examples() {
        assert_eq!(assign_to_workers(&[3, 9, 4], 3), vec![2, 0, 1]);
        let owner = assign_to_workers(&[5, 4, 3, 3], 2);
        let mut load = [0; 2];
        for (i, &w) in owner.iter().enumerate() {
            load[w] += [5, 4, 3, 3][i];
        }
        assert_eq!(load, [8, 7]);
        assert_eq!(assign_to_workers(&[1, 2, 3], 1), vec![0, 0, 0]);
    }

    fn two_triangles() -> (Graph, Partitioning) {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)]).unwrap();
        let p = Partitioning::from_assignment(&g, vec![0, 0, 0, 1, 1, 1], 2, 0.0).unwrap();
        (g, p)
    }

    #[test]
    fn empty_replicas_is_identity() {
        let (g, p) = two_triangles();
        let a = augment_subgraph(&g, &p, 0, &[], 1).unwrap();
        let plain = induce_subgraph(&g, &[0, 1, 2], &[0, 1, 2]).unwrap();
        assert_eq!(a.view, plain);
    }

    #[test]
    fn replica_brings_all_its_edges() {
        // replica 3 touches 2 (owned) and 4, 5 (not in the set)
        let (g, p) = two_triangles();
        let a = augment_subgraph(&g, &p, 0, &[3], 1).unwrap();
        assert_eq!(a.view.num_edges(), 4);
        assert_eq!(a.view.owned(), &[true, true, true, false]);
        assert_eq!(a.replica_sources, vec![(3, 1)]);
        // a replica adjacent to two owned nodes
        let g2 = Graph::from_edges(4, &[(0, 1), (0, 3), (1, 3), (2, 3)]).unwrap();
        let p2 = Partitioning::from_assignment(&g2, vec![0, 0, 1, 1], 2, 1.0).unwrap();
        let a2 = augment_subgraph(&g2, &p2, 0, &[3], 1).unwrap();
        assert_eq!(a2.view.global_edges(), vec![(0, 1), (0, 3), (1, 3)]);
    }

    #[test]
    fn owned_replica_is_rejected() {
        let (g, p) = two_triangles();
        assert!(augment_subgraph(&g, &p, 0, &[1], 1).is_err());
    }

    #[test]
    fn no_cut_means_no_replicas() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        let p = Partitioning::from_assignment(&g, vec![0, 0, 1, 1], 2, 0.0).unwrap();
        for a in augment_all(&g, &p, &AugmentConfig::default(), 1).unwrap() {
            assert!(a.subgraph.replica_sources.is_empty());
            assert!(a.candidates.is_empty());
        }
    }

    #[test]
    fn record_round_trip() {
        let (g, p) = two_triangles();
        let a = augment_subgraph(&g, &p, 1, &[2], 1).unwrap();
        let back = AugmentedSubgraph::from_record(&g, &a.to_record()).unwrap();
        assert_eq!(a, back);
    }
}
