//! Monte-Carlo importance of halo nodes from boundary-rooted random walks.
//!
//! Walks start at a uniformly random boundary node and take `layers` uniform
//! steps over the full graph. A pilot batch of `⌊d̄⌋·|B|` walks (d̄ = mean
//! boundary degree) gives provisional estimates; the total walk count then
//! follows from the Monte-Carlo error bound `E = z_c·σ / (x̄·√n)`.
//!
//! Two readings of σ are offered. [`WalkCountRule::PerWalk`] (the default)
//! takes σ as the largest per-walk standard deviation `√(p(1−p))` of a visit
//! indicator and x̄ as the mean importance, then re-estimates after each batch
//! until the bound holds. [`WalkCountRule::Spread`] takes σ and x̄ over the
//! provisional importance values themselves and extends the pilot once.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::Graph;

/// How visits are turned into importance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMode {
    /// Fraction of walks visiting the node at least once.
    #[default]
    Indicator,
    /// Share of all candidate visits, counting repeats.
    Multiplicity,
}

/// Which spread enters the walk-count bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkCountRule {
    /// Worst per-walk indicator deviation, refined after every batch.
    #[default]
    PerWalk,
    /// Spread of the pilot importance values across candidates.
    Spread,
}

/// Refinement batches allowed after the pilot under [`WalkCountRule::PerWalk`].
const MAX_REFINEMENTS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloParams {
    pub z_c: f64,
    pub err_target: f64,
    pub mode: ImportanceMode,
    pub walk_count: WalkCountRule,
    /// Upper bound on the total walk count.
    pub max_walks: usize,
}

impl Default for MonteCarloParams {
    fn default() -> Self {
        Self {
            z_c: 1.96,
            err_target: 0.05,
            mode: ImportanceMode::Indicator,
            walk_count: WalkCountRule::PerWalk,
            max_walks: 50_000,
        }
    }
}

/// Boundary-rooted walks, each at most `layers + 1` node ids long, stored
/// back to back.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WalkSet {
    nodes: Vec<usize>,
    ends: Vec<usize>,
    pub layers: usize,
    pub pilot_walks: usize,
    /// Walks that stopped early at a node with no neighbors.
    pub truncated: usize,
}

impl WalkSet {
    pub fn new(layers: usize) -> Self {
        Self {
            layers,
            ..Self::default()
        }
    }

    pub fn push(&mut self, walk: &[usize]) {
        if walk.len() < self.layers + 1 {
            self.truncated += 1;
        }
        self.nodes.extend_from_slice(walk);
        self.ends.push(self.nodes.len());
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn walk(&self, i: usize) -> &[usize] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        &self.nodes[start..self.ends[i]]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.len()).map(|i| self.walk(i))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    /// I(v) for every candidate (0 when never visited).
    pub values: BTreeMap<usize, f64>,
    pub walks: usize,
    pub pilot_walks: usize,
    pub z_c: f64,
    pub err_target: f64,
    /// σ and x̄ behind the final walk count (see [`WalkCountRule`]).
    pub sigma: f64,
    pub mean: f64,
}

impl ImportanceTable {
    pub fn get(&self, v: usize) -> Option<f64> {
        self.values.get(&v).copied()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.values.contains_key(&v)
    }
}

/// Total walks needed for relative error `err_target` at confidence `z_c`.
///
/// Returns 0 when the sample is empty or its mean is 0 (nothing reachable),
/// and `provisional` when the sample has zero spread.
pub fn estimate_walk_count(sample: &[f64], provisional: usize, z_c: f64, err_target: f64) -> usize {
    if sample.is_empty() {
        return 0;
    }
    let (mean, sigma) = mean_std(sample);
    if mean <= 0.0 {
        return 0;
    }
    if sigma == 0.0 {
        return provisional;
    }
    ((z_c * sigma / (mean * err_target)).powi(2)).ceil() as usize
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One uniform walk of up to `steps` steps from `start`.
pub fn random_walk(g: &Graph, start: usize, steps: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut walk = Vec::with_capacity(steps + 1);
    walk.push(start);
    let mut cur = start;
    for _ in 0..steps {
        let nbrs = g.neighbors(cur);
        if nbrs.is_empty() {
            break;
        }
        cur = nbrs[rng.gen_range(0..nbrs.len())];
        walk.push(cur);
    }
    walk
}

#[derive(Default)]
struct Tally {
    /// Walks that visit each candidate at least once.
    hits: BTreeMap<usize, usize>,
    /// Visits to each candidate including repeats.
    visits: BTreeMap<usize, usize>,
    total_visits: usize,
}

impl Tally {
    fn add(&mut self, walk: &[usize], candidates: &BTreeMap<usize, f64>) {
        let mut seen: Vec<usize> = Vec::with_capacity(walk.len());
        for &v in walk {
            if !candidates.contains_key(&v) {
                continue;
            }
            *self.visits.entry(v).or_insert(0) += 1;
            self.total_visits += 1;
            if !seen.contains(&v) {
                seen.push(v);
                *self.hits.entry(v).or_insert(0) += 1;
            }
        }
    }

    fn value(&self, v: usize, walks: usize, mode: ImportanceMode) -> f64 {
        match mode {
            ImportanceMode::Indicator if walks > 0 => {
                self.hits.get(&v).copied().unwrap_or(0) as f64 / walks as f64
            }
            ImportanceMode::Multiplicity if self.total_visits > 0 => {
                self.visits.get(&v).copied().unwrap_or(0) as f64 / self.total_visits as f64
            }
            _ => 0.0,
        }
    }
}

/// Estimates I(v) for every candidate from boundary-rooted walks.
///
/// Empty `boundary` or `candidates` yields an empty table and no walks.
pub fn node_importance(
    g: &Graph,
    boundary: &[usize],
    candidates: &[usize],
    layers: usize,
    params: &MonteCarloParams,
    rng: &mut ChaCha8Rng,
) -> (ImportanceTable, WalkSet) {
    let empty_table = ImportanceTable {
        z_c: params.z_c,
        err_target: params.err_target,
        ..ImportanceTable::default()
    };
    if boundary.is_empty() || candidates.is_empty() {
        return (empty_table, WalkSet::new(layers));
    }
    let mut values: BTreeMap<usize, f64> = candidates.iter().map(|&v| (v, 0.0)).collect();

    let mean_degree = boundary.iter().map(|&b| g.degree(b)).sum::<usize>() as f64 / boundary.len() as f64;
    let pilot = ((mean_degree.floor() as usize) * boundary.len()).clamp(1, params.max_walks);

    let mut set = WalkSet::new(layers);
    set.pilot_walks = pilot;
    let mut tally = Tally::default();
    let run = |count: usize, set: &mut WalkSet, tally: &mut Tally, rng: &mut ChaCha8Rng| {
        for _ in 0..count {
            let start = boundary[rng.gen_range(0..boundary.len())];
            let walk = random_walk(g, start, layers, rng);
            tally.add(&walk, &values);
            set.push(&walk);
        }
    };
    run(pilot, &mut set, &mut tally, rng);

    let (mean, sigma) = match params.walk_count {
        WalkCountRule::Spread => {
            let sample: Vec<f64> = tally
                .hits
                .keys()
                .map(|&v| tally.value(v, pilot, params.mode))
                .collect();
            let target = estimate_walk_count(&sample, pilot, params.z_c, params.err_target).min(params.max_walks);
            if target > pilot {
                run(target - pilot, &mut set, &mut tally, rng);
            }
            if sample.is_empty() {
                (0.0, 0.0)
            } else {
                mean_std(&sample)
            }
        }
        WalkCountRule::PerWalk => {
            let mut stats = per_walk_stats(&tally, set.len());
            for _ in 0..MAX_REFINEMENTS {
                let target = per_walk_count(stats, set.len(), params).min(params.max_walks);
                if target <= set.len() {
                    break;
                }
                run(target - set.len(), &mut set, &mut tally, rng);
                stats = per_walk_stats(&tally, set.len());
            }
            stats
        }
    };

    let total = set.len();
    for (&v, val) in values.iter_mut() {
        *val = tally.value(v, total, params.mode);
    }
    let table = ImportanceTable {
        values,
        walks: total,
        pilot_walks: pilot,
        sigma,
        mean,
        ..empty_table
    };
    (table, set)
}

/// Mean hit fraction over visited candidates and the largest `√(p(1−p))`.
///
/// The deviation uses add-one smoothed `p = (h+1)/(n+2)`, so a small batch in
/// which some node was hit by every walk (or by none) cannot claim zero
/// variance and stop sampling early.
///
/// Candidates only exist next to a boundary node, so every walk has a positive
/// chance of reaching one; a batch with no hits at all is a small-sample
/// artefact and is treated as `p = 1/(n+2)` for every candidate.
fn per_walk_stats(tally: &Tally, walks: usize) -> (f64, f64) {
    let n = walks as f64;
    if tally.hits.is_empty() {
        let p = 1.0 / (n + 2.0);
        return (p, (p * (1.0 - p)).sqrt());
    }
    let mean = tally.hits.values().map(|&h| h as f64 / n).sum::<f64>() / tally.hits.len() as f64;
    let sigma = tally
        .hits
        .values()
        .map(|&h| {
            let p = (h as f64 + 1.0) / (n + 2.0);
            (p * (1.0 - p)).sqrt()
        })
        .fold(0.0, f64::max);
    (mean, sigma)
}

/// Walks needed so that `z_c·σ/√n ≤ err_target·x̄`.
fn per_walk_count((mean, sigma): (f64, f64), done: usize, params: &MonteCarloParams) -> usize {
    if mean <= 0.0 || sigma == 0.0 {
        return done;
    }
    ((params.z_c * sigma / (mean * params.err_target)).powi(2)).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, stage};

    #[test]
    fn walk_count_formula() {
        // σ/x̄ = 0.5: values 0.5 and 1.5 have mean 1, population std 0.5
        assert_eq!(estimate_walk_count(&[0.5, 1.5], 10, 1.96, 0.05), 385);
        assert_eq!(estimate_walk_count(&[0.3, 0.3, 0.3], 17, 1.96, 0.05), 17);
        assert_eq!(estimate_walk_count(&[0.0, 0.0], 17, 1.96, 0.05), 0);
        assert_eq!(estimate_walk_count(&[], 17, 1.96, 0.05), 0);
    }

    #[test]
    fn defaults_match_the_95_percent_design() {
        let p = MonteCarloParams::default();
        assert_eq!(p.z_c, 1.96);
        assert_eq!(p.err_target, 0.05);
    }

    #[test]
    fn empty_candidates_give_no_walks() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let mut r = rng::stream(0, stage::WALKS, 0);
        let (t, w) = node_importance(&g, &[0], &[], 2, &MonteCarloParams::default(), &mut r);
        assert!(t.values.is_empty());
        assert!(w.is_empty());
    }

    #[test]
    fn forced_visit_has_importance_one() {
        // boundary {0,1,2} all adjacent to candidate 3 only (outside), one layer
        let g = Graph::from_edges(4, &[(0, 3), (1, 3), (2, 3)]).unwrap();
        let mut r = rng::stream(1, stage::WALKS, 0);
        let (t, w) = node_importance(&g, &[0, 1, 2], &[3], 1, &MonteCarloParams::default(), &mut r);
        assert_eq!(t.get(3), Some(1.0));
        assert!(w.iter().all(|x| x.len() == 2 && x[1] == 3));
    }

    #[test]
    fn walks_have_layer_length_and_start_on_boundary() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)]).unwrap();
        let mut r = rng::stream(2, stage::WALKS, 0);
        let (t, w) = node_importance(&g, &[2], &[3, 4, 5], 2, &MonteCarloParams::default(), &mut r);
        assert!(w.iter().all(|x| x.len() == 3 && x[0] == 2));
        assert_eq!(w.truncated, 0);
        assert_eq!(t.walks, w.len());
        assert!(t.values.values().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn isolated_start_truncates() {
        let g = Graph::from_edges(3, &[(1, 2)]).unwrap();
        let mut r = rng::stream(0, stage::WALKS, 0);
        let w = random_walk(&g, 0, 3, &mut r);
        assert_eq!(w, vec![0]);
    }

    #[test]
    fn multiplicity_mode_counts_repeats() {
        // path 0-1-2 with boundary {0}, candidates {1,2}; two steps: 0→1→(0|2)
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let params = MonteCarloParams {
            mode: ImportanceMode::Multiplicity,
            ..MonteCarloParams::default()
        };
        let mut r = rng::stream(3, stage::WALKS, 0);
        let (t, _) = node_importance(&g, &[0], &[1, 2], 2, &params, &mut r);
        let sum: f64 = t.values.values().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        // every walk passes 1 while 2 is reached at most once per walk
        assert!(t.get(1).unwrap() >= t.get(2).unwrap());
    }
}
