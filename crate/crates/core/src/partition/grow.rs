//! Seeded greedy growth on the coarsest level, repeated over restarts.

use std::collections::HashMap;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::coarsen::CoarseGraph;
use crate::error::{GadError, Result};
use crate::rng::{self, stage};

const UNASSIGNED: usize = usize::MAX;

/// Best restart on the coarse level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoarseAssignment {
    pub assignment: Vec<usize>,
    /// Weighted edge cut on the coarse level.
    pub cut: u64,
    /// Index of the winning restart.
    pub restart: usize,
    /// Orphans with no assigned neighbor, sent to the globally lightest part.
    pub isolated_orphans: usize,
}

/// Per-part weight cap `⌊(1+ε)·⌈n/k⌉⌋`.
pub fn balance_cap(total: u64, k: usize, epsilon: f64) -> u64 {
    let per_part = total.div_ceil(k as u64);
    // 1e-9 absorbs products such as 1.15 * 20 = 22.999999999999996
    ((1.0 + epsilon) * per_part as f64 + 1e-9).floor() as u64
}

fn grow_once(cg: &CoarseGraph, k: usize, cap: u64, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
    let n = cg.num_nodes();
    let mut assign = vec![UNASSIGNED; n];
    let mut weight = vec![0u64; k];
    let mut frontier: Vec<HashMap<usize, u64>> = vec![HashMap::new(); k];
    let mut active = vec![true; k];

    let place = |u: usize, p: usize, assign: &mut [usize], weight: &mut [u64], frontier: &mut [HashMap<usize, u64>]| {
        assign[u] = p;
        weight[p] += cg.node_weight(u);
        frontier[p].remove(&u);
        for (v, w) in cg.neighbors(u) {
            if assign[v] == UNASSIGNED {
                let e = frontier[p].entry(v).or_insert(0);
                *e = (*e).max(w);
            }
        }
    };

    for (p, seed) in index::sample(rng, n, k).into_iter().enumerate() {
        place(seed, p, &mut assign, &mut weight, &mut frontier);
    }

    loop {
        let mut progressed = false;
        for p in 0..k {
            if !active[p] {
                continue;
            }
            frontier[p].retain(|&v, _| assign[v] == UNASSIGNED);
            let best = frontier[p]
                .iter()
                .filter(|&(&v, _)| weight[p] + cg.node_weight(v) <= cap)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&v, _)| v);
            match best {
                Some(v) => {
                    place(v, p, &mut assign, &mut weight, &mut frontier);
                    progressed = true;
                }
                None => active[p] = false,
            }
        }
        if !progressed {
            break;
        }
    }

    // Orphans join the lightest adjacent part; isolated ones the lightest part overall.
    let mut isolated = 0;
    loop {
        let mut pending = false;
        let mut progressed = false;
        for u in 0..n {
            if assign[u] != UNASSIGNED {
                continue;
            }
            pending = true;
            let target = cg
                .neighbors(u)
                .filter(|&(v, _)| assign[v] != UNASSIGNED)
                .map(|(v, _)| assign[v])
                .min_by_key(|&p| (weight[p], p));
            if let Some(p) = target {
                assign[u] = p;
                weight[p] += cg.node_weight(u);
                progressed = true;
            }
        }
        if !pending {
            break;
        }
        if !progressed {
            let u = (0..n).find(|&u| assign[u] == UNASSIGNED).expect("pending orphan");
            let p = (0..k).min_by_key(|&p| (weight[p], p)).expect("k >= 1");
            assign[u] = p;
            weight[p] += cg.node_weight(u);
            isolated += 1;
        }
    }
    (assign, isolated)
}

/// Runs `restarts` seeded growths and keeps the one with minimum weighted cut
/// (ties: lowest restart index). `total_nodes` is the original node count used
/// for the balance cap.
pub fn partition_coarse(
    cg: &CoarseGraph,
    k: usize,
    epsilon: f64,
    restarts: usize,
    seed: u64,
    total_nodes: u64,
) -> Result<CoarseAssignment> {
    if k == 0 || k > cg.num_nodes() {
        return Err(GadError::Config(format!(
            "k = {k} must lie in 1..={} coarse nodes",
            cg.num_nodes()
        )));
    }
    if restarts == 0 {
        return Err(GadError::Config("restarts must be >= 1".into()));
    }
    let cap = balance_cap(total_nodes, k, epsilon);
    let total = cg.total_node_weight();
    if (k as u64) * cap < total {
        return Err(GadError::InfeasibleBalance { k, cap, total });
    }
    let runs: Vec<(u64, usize, Vec<usize>, usize)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, stage::RESTART, r as u64);
            let (assignment, isolated) = grow_once(cg, k, cap, &mut rng);
            (cg.weighted_cut(&assignment), r, assignment, isolated)
        })
        .collect();
    let (cut, restart, assignment, isolated_orphans) = runs
        .into_iter()
        .min_by_key(|(cut, r, _, _)| (*cut, *r))
        .expect("restarts >= 1");
    if isolated_orphans > 0 {
        log::warn!("{isolated_orphans} isolated coarse node(s) assigned to the lightest part");
    }
    Ok(CoarseAssignment {
        assignment,
        cut,
        restart,
        isolated_orphans,
    })
}
