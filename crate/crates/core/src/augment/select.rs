//! Replication budget and depth-first replica selection.

use serde::{Deserialize, Serialize};

use super::walks::{ImportanceTable, WalkSet};
use crate::graph::{density, SubgraphView};

/// `⌈α·(1 + density)·|v|⌉` for a partition's own subgraph.
pub fn replication_budget(sub: &SubgraphView, alpha: f64) -> usize {
    let raw = alpha * (1.0 + density(sub)) * sub.num_nodes() as f64;
    // 1e-9 keeps exact integers such as 0.01 * 100 from rounding up
    (raw - 1e-9).ceil().max(0.0) as usize
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    /// Replicas in selection order.
    pub replicas: Vec<usize>,
    /// Distinct candidates that appear on at least one walk.
    pub covered: usize,
    /// `budget − replicas.len()` when walks cover fewer candidates than the budget.
    pub shortfall: usize,
}

/// Takes walks in decreasing order of summed candidate importance (ties:
/// earliest walk) and appends each walk's unseen candidates in walk order
/// until `budget` replicas are chosen.
///
/// Candidates on a walk are reached from the boundary through nodes that are
/// either owned or already selected, so no replica is left dangling.
pub fn depth_first_select(table: &ImportanceTable, walks: &WalkSet, budget: usize) -> Selection {
    let mut scored: Vec<(f64, usize)> = walks
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut seen: Vec<usize> = Vec::with_capacity(w.len());
            let mut score = 0.0;
            for &v in w {
                if let Some(iv) = table.get(v) {
                    if !seen.contains(&v) {
                        seen.push(v);
                        score += iv;
                    }
                }
            }
            (score, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut covered: Vec<usize> = walks
        .iter()
        .flatten()
        .copied()
        .filter(|&v| table.contains(v))
        .collect();
    covered.sort_unstable();
    covered.dedup();

    let target = budget.min(covered.len());
    let mut replicas = Vec::with_capacity(target);
    let mut chosen = std::collections::HashSet::with_capacity(target);
    'outer: for &(_, i) in &scored {
        if replicas.len() == target {
            break;
        }
        for &v in walks.walk(i) {
            if table.contains(v) && chosen.insert(v) {
                replicas.push(v);
                if replicas.len() == target {
                    break 'outer;
                }
            }
        }
    }
    Selection {
        replicas,
        covered: covered.len(),
        shortfall: budget.saturating_sub(covered.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{whole_graph_view, Graph};
    use std::collections::BTreeMap;

    fn table(entries: &[(usize, f64)]) -> ImportanceTable {
        ImportanceTable {
            values: entries.iter().copied().collect::<BTreeMap<_, _>>(),
            ..ImportanceTable::default()
        }
    }

    fn walks(ws: &[&[usize]]) -> WalkSet {
        let mut set = WalkSet::new(2);
        for w in ws {
            set.push(w);
        }
        set
    }

    #[test]
    fn budget_formula() {
        // 200 nodes with density 0.2: 3980 edges
        let mut edges = Vec::new();
        'fill: for u in 0..200usize {
            for v in u + 1..200 {
                if edges.len() == 3980 {
                    break 'fill;
                }
                edges.push((u, v));
            }
        }
        let g = Graph::from_edges(200, &edges).unwrap();
        let sub = whole_graph_view(&g);
        assert!((density(&sub) - 0.2).abs() < 1e-12);
        assert_eq!(replication_budget(&sub, 0.01), 3);

        let sparse = whole_graph_view(&Graph::from_edges(100, &[]).unwrap());
        assert_eq!(replication_budget(&sparse, 0.01), 1);
    }

    #[test]
    fn zero_budget_selects_nothing() {
        let s = depth_first_select(&table(&[(5, 0.5)]), &walks(&[&[0, 5]]), 0);
        assert!(s.replicas.is_empty());
    }

    #[test]
    fn single_walk_prefix() {
        let s = depth_first_select(&table(&[(1, 0.4), (2, 0.3)]), &walks(&[&[0, 1, 2]]), 1);
        assert_eq!(s.replicas, vec![1]);
    }

    #[test]
    fn shared_node_is_taken_once_from_the_heavier_walk() {
        // walk 0: b=10, y=12, c=11 → 0.2 + 0.5 = 0.7
        // walk 1: b=10, c=11, x=13 → 0.5 + 0.4 = 0.9
        let t = table(&[(11, 0.5), (12, 0.2), (13, 0.4)]);
        let w = walks(&[&[10, 12, 11], &[10, 11, 13]]);
        let s = depth_first_select(&t, &w, 3);
        assert_eq!(s.replicas, vec![11, 13, 12]);
        let s2 = depth_first_select(&t, &w, 1);
        assert_eq!(s2.replicas, vec![11]);
    }

    #[test]
    fn shortfall_when_walks_cover_too_little() {
        let s = depth_first_select(&table(&[(1, 0.4), (2, 0.0)]), &walks(&[&[0, 1]]), 5);
        assert_eq!(s.replicas, vec![1]);
        assert_eq!(s.covered, 1);
        assert_eq!(s.shortfall, 4);
    }
}
