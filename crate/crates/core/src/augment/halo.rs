//! Boundary and x-hop halo discovery.

use std::collections::VecDeque;

use crate::graph::Graph;

/// Nodes of part `i` with at least one neighbor in another part, ascending.
pub fn boundary_nodes(g: &Graph, assignment: &[usize], i: usize) -> Vec<usize> {
    (0..g.num_nodes())
        .filter(|&u| assignment[u] == i && g.neighbors(u).iter().any(|&v| assignment[v] != i))
        .collect()
}

/// Nodes outside part `i` within `layers` hops of its boundary in the full
/// graph, ascending. These are the candidate replicas, and also exactly the
/// remote nodes an L-layer GCN on part `i` would need.
pub fn candidate_replication_nodes(g: &Graph, assignment: &[usize], i: usize, layers: usize) -> Vec<usize> {
    let boundary = boundary_nodes(g, assignment, i);
    let dist = bfs_depths(g, &boundary, layers);
    (0..g.num_nodes())
        .filter(|&u| dist[u] != usize::MAX && assignment[u] != i)
        .collect()
}

/// Multi-source BFS depth, truncated at `max_depth` (unreached = `usize::MAX`).
pub fn bfs_depths(g: &Graph, sources: &[usize], max_depth: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.num_nodes()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s] == usize::MAX {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        if dist[u] == max_depth {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}
