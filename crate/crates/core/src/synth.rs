//! Synthetic stochastic-block-model graphs for tests and benchmarks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_masks, SplitSpec};
use crate::error::Result;
use crate::graph::Graph;
use crate::matrix::Matrix;
use crate::rng::{self, stage};

/// Block sizes and connection probabilities, plus a bag-of-words feature model
/// where each block prefers its own slice of the vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Probability of each in-topic word being present.
    pub p_topic: f64,
    /// Probability of each off-topic word being present.
    pub p_noise: f64,
    pub seed: u64,
}

impl SbmSpec {
    /// Two equal blocks, structure only (one constant feature).
    pub fn two_block(n: usize, p_in: f64, p_out: f64, seed: u64) -> Self {
        Self {
            block_sizes: vec![n / 2, n - n / 2],
            p_in,
            p_out,
            feature_dim: 0,
            p_topic: 0.0,
            p_noise: 0.0,
            seed,
        }
    }
}

/// Samples SBM edges; returns `(edges, block of each node)`.
pub fn sbm_edges(block_sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> (Vec<(usize, usize)>, Vec<usize>) {
    let blocks: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = blocks.len();
    let mut rng = rng::stream(seed, stage::SBM_EDGES, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if blocks[u] == blocks[v] { p_in } else { p_out };
            if rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    (edges, blocks)
}

/// Builds a labeled SBM graph (label = block) with the default 45/18/37 split.
pub fn sbm_graph(spec: &SbmSpec) -> Result<Graph> {
    let (edges, blocks) = sbm_edges(&spec.block_sizes, spec.p_in, spec.p_out, spec.seed);
    let n = blocks.len();
    let classes = spec.block_sizes.len();
    if spec.feature_dim == 0 {
        let g = Graph::from_edges(n, &edges)?;
        let labels = blocks.iter().map(|&b| Some(b)).collect();
        let features = g.features().clone();
        return Graph::new(n, &edges, features, labels, classes);
    }
    let mut rng = rng::stream(spec.seed, stage::SBM_FEATURES, 0);
    let topic = |b: usize, j: usize| j * classes / spec.feature_dim == b;
    let mut features = Matrix::zeros(n, spec.feature_dim);
    for u in 0..n {
        for j in 0..spec.feature_dim {
            let p = if topic(blocks[u], j) { spec.p_topic } else { spec.p_noise };
            if rng.gen_bool(p) {
                features[(u, j)] = 1.0;
            }
        }
    }
    features.normalize_rows_l1();
    let labels: Vec<Option<usize>> = blocks.iter().map(|&b| Some(b)).collect();
    let masks = split_masks(&labels, &SplitSpec::default(), spec.seed)?;
    Graph::new(n, &edges, features, labels, classes)?.with_masks(masks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_structure_is_visible() {
        let (edges, blocks) = sbm_edges(&[100, 100], 0.1, 0.005, 3);
        let inside = edges.iter().filter(|&&(u, v)| blocks[u] == blocks[v]).count();
        assert!(inside > 5 * (edges.len() - inside));
    }

    #[test]
    fn labeled_graph_has_masks_and_features() {
        let spec = SbmSpec {
            block_sizes: vec![30, 30, 30],
            p_in: 0.2,
            p_out: 0.01,
            feature_dim: 30,
            p_topic: 0.3,
            p_noise: 0.02,
            seed: 1,
        };
        let g = sbm_graph(&spec).unwrap();
        assert_eq!(g.num_classes(), 3);
        assert_eq!(g.feature_dim(), 30);
        let (tr, va, te) = g.masks().counts();
        assert_eq!(tr + va + te, 90);
    }
}
