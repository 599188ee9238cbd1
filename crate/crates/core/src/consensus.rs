//! Subgraph weights ζ and gradient consensus.
//!
//! `ζ(g) = Σ_{i<j} p(i)·p(j) / (d(i,j) + β)` where `p` is the local degree
//! share and `d` a feature distance. Degree-regular subgraphs with close
//! features score high and get more say in the weighted average of worker
//! gradients.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::gcn::Gradients;
use crate::graph::SubgraphView;
use crate::matrix::Matrix;
use crate::rng::{self, stage};

/// Feature distance used inside ζ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaDistance {
    /// Euclidean norm over the whole feature vector.
    #[default]
    L2,
    /// Mean absolute difference, one dimension at a time.
    PerDimMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZetaParams {
    pub beta: f64,
    /// Exact pair sum up to this many nodes; sampled above it.
    pub pair_cap: usize,
    pub distance: ZetaDistance,
}

impl Default for ZetaParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            pair_cap: 4096,
            distance: ZetaDistance::L2,
        }
    }
}

/// ζ for one subgraph plus the pieces it was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgraphWeight {
    pub zeta: f64,
    /// `Σ_{i<j} p(i)·p(j)` over the pairs visited (rescaled when sampled).
    pub pair_probability: f64,
    /// Mean feature distance over the pairs visited.
    pub mean_distance: f64,
    pub beta: f64,
    pub sampled: bool,
}

/// `p(v) = deg(v) / Σ deg`; uniform when the subgraph has no edges.
pub fn degree_probability(sub: &SubgraphView) -> Vec<f64> {
    let n = sub.num_nodes();
    let total: usize = (0..n).map(|i| sub.degree(i)).sum();
    if total == 0 {
        return vec![1.0 / n.max(1) as f64; n];
    }
    (0..n).map(|i| sub.degree(i) as f64 / total as f64).collect()
}

pub fn feature_distance(a: &[f64], b: &[f64], mode: ZetaDistance) -> f64 {
    match mode {
        ZetaDistance::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        ZetaDistance::PerDimMean => {
            if a.is_empty() {
                0.0
            } else {
                a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
            }
        }
    }
}

/// ζ from node probabilities and feature rows (row `i` belongs to node `i`).
pub fn zeta_from_parts(p: &[f64], features: &Matrix, params: &ZetaParams, seed: u64) -> Result<SubgraphWeight> {
    if !(params.beta > 0.0) {
        return Err(GadError::Config(format!("beta must be > 0, got {}", params.beta)));
    }
    if p.len() != features.rows() {
        return Err(GadError::Dimension(format!(
            "{} probabilities for {} feature rows",
            p.len(),
            features.rows()
        )));
    }
    let n = p.len();
    if n < 2 {
        return Ok(SubgraphWeight {
            zeta: 1.0,
            pair_probability: 0.0,
            mean_distance: 0.0,
            beta: params.beta,
            sampled: false,
        });
    }
    let term = |i: usize, j: usize| {
        let d = feature_distance(features.row(i), features.row(j), params.distance);
        (p[i] * p[j], d, p[i] * p[j] / (d + params.beta))
    };
    let total_pairs = (n * (n - 1) / 2) as f64;
    let (pp, dist, zeta, sampled) = if n <= params.pair_cap {
        let (pp, dist, z) = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = (0.0, 0.0, 0.0);
                for j in i + 1..n {
                    let (a, b, c) = term(i, j);
                    acc.0 += a;
                    acc.1 += b;
                    acc.2 += c;
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0, 0.0, 0.0), |s, t| (s.0 + t.0, s.1 + t.1, s.2 + t.2));
        (pp, dist / total_pairs, z, false)
    } else {
        let samples = params.pair_cap * params.pair_cap / 2;
        let mut rng = rng::stream(seed, stage::ZETA, 0);
        let mut pp = 0.0;
        let mut dist = 0.0;
        let mut z = 0.0;
        for _ in 0..samples {
            let i = rng.gen_range(0..n);
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let (a, b, c) = term(i, j);
            pp += a;
            dist += b;
            z += c;
        }
        let scale = total_pairs / samples as f64;
        (pp * scale, dist / samples as f64, z * scale, true)
    };
    Ok(SubgraphWeight {
        zeta,
        pair_probability: pp,
        mean_distance: dist,
        beta: params.beta,
        sampled,
    })
}

/// ζ of a subgraph; `features` holds one row per local node.
pub fn zeta(sub: &SubgraphView, features: &Matrix, params: &ZetaParams, seed: u64) -> Result<SubgraphWeight> {
    zeta_from_parts(&degree_probability(sub), features, params, seed)
}

fn check_shapes(grads: &[&Gradients]) -> Result<()> {
    let first = grads
        .first()
        .ok_or_else(|| GadError::Config("consensus over zero gradients".into()))?
        .shapes();
    if grads.iter().any(|g| g.shapes() != first) {
        return Err(GadError::Dimension("gradient shapes differ across workers".into()));
    }
    Ok(())
}

/// Arithmetic mean of the gradients (and of their losses).
pub fn plain_consensus(grads: &[&Gradients]) -> Result<Gradients> {
    check_shapes(grads)?;
    let n = grads.len() as f64;
    let mut out = grads[0].clone();
    for g in &grads[1..] {
        for (o, w) in out.weights.iter_mut().zip(&g.weights) {
            o.axpy(1.0, w)?;
        }
        out.loss += g.loss;
    }
    for o in &mut out.weights {
        o.scale(1.0 / n);
    }
    out.loss /= n;
    Ok(out)
}

/// `Σ ζ_i·∇W_i / Σ ζ_j`. Equal weights reduce exactly to [`plain_consensus`].
pub fn weighted_consensus(grads: &[&Gradients], zetas: &[f64]) -> Result<Gradients> {
    check_shapes(grads)?;
    if grads.len() != zetas.len() {
        return Err(GadError::Dimension(format!(
            "{} gradients but {} weights",
            grads.len(),
            zetas.len()
        )));
    }
    if let Some(z) = zetas.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
        return Err(GadError::InvalidWeight(format!("subgraph weight {z} is not positive and finite")));
    }
    if zetas.iter().all(|&z| z == zetas[0]) {
        return plain_consensus(grads);
    }
    let total: f64 = zetas.iter().sum();
    let mut out = Gradients {
        weights: grads[0].weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
        loss: 0.0,
    };
    for (g, &z) in grads.iter().zip(zetas) {
        let w = z / total;
        for (o, gw) in out.weights.iter_mut().zip(&g.weights) {
            o.axpy(w, gw)?;
        }
        out.loss += w * g.loss;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{whole_graph_view, Graph};

    fn scalar(x: f64) -> Gradients {
        Gradients {
            weights: vec![Matrix::from_rows(&[vec![x]]).unwrap()],
            loss: x,
        }
    }

    #[test]
    fn degree_probability_examples() {
        let square = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        assert_eq!(degree_probability(&whole_graph_view(&square)), vec![0.25; 4]);
        let star = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let p = degree_probability(&whole_graph_view(&star));
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!(p[1..].iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));
        let empty = Graph::from_edges(3, &[]).unwrap();
        assert_eq!(degree_probability(&whole_graph_view(&empty)), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn uniform_closed_form() {
        for n in 2..9 {
            let p = vec![1.0 / n as f64; n];
            let w = zeta_from_parts(&p, &Matrix::zeros(n, 3), &ZetaParams::default(), 0).unwrap();
            let expect = (1.0 - 1.0 / n as f64) / 2.0;
            assert!((w.zeta - expect).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn single_node_is_neutral() {
        let w = zeta_from_parts(&[1.0], &Matrix::zeros(1, 2), &ZetaParams::default(), 0).unwrap();
        assert_eq!(w.zeta, 1.0);
    }

    #[test]
    fn distance_lowers_zeta() {
        let p = [0.5, 0.5];
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let w = zeta_from_parts(&p, &x, &ZetaParams::default(), 0).unwrap();
        assert!((w.zeta - 0.25 / 6.0).abs() < 1e-15);
        let per_dim = ZetaParams {
            distance: ZetaDistance::PerDimMean,
            ..ZetaParams::default()
        };
        let w = zeta_from_parts(&p, &x, &per_dim, 0).unwrap();
        assert!((w.zeta - 0.25 / 4.5).abs() < 1e-15);
    }

    #[test]
    fn sampled_estimate_is_close() {
        let n = 60;
        let p: Vec<f64> = (1..=n).map(|i| i as f64 / (n * (n + 1) / 2) as f64).collect();
        let x = Matrix::from_vec(n, 1, (0..n).map(|i| (i % 7) as f64).collect()).unwrap();
        let exact = zeta_from_parts(&p, &x, &ZetaParams::default(), 0).unwrap();
        let capped = ZetaParams {
            pair_cap: 40,
            ..ZetaParams::default()
        };
        let est = zeta_from_parts(&p, &x, &capped, 0).unwrap();
        assert!(est.sampled && !exact.sampled);
        assert!((est.zeta / exact.zeta - 1.0).abs() < 0.1);
    }

    #[test]
    fn consensus_examples() {
        let (a, b) = (scalar(2.0), scalar(6.0));
        let w = weighted_consensus(&[&a, &b], &[1.0, 3.0]).unwrap();
        assert!((w.weights[0][(0, 0)] - 5.0).abs() < 1e-15);
        let p = plain_consensus(&[&scalar(1.0), &scalar(3.0)]).unwrap();
        assert_eq!(p.weights[0][(0, 0)], 2.0);
        assert_eq!(plain_consensus(&[&a]).unwrap(), a);
        assert_eq!(weighted_consensus(&[&a, &b], &[0.7, 0.7]).unwrap(), plain_consensus(&[&a, &b]).unwrap());
        assert!(weighted_consensus(&[&a, &b], &[1.0, 0.0]).is_err());
        assert!(weighted_consensus(&[&a], &[1.0, 2.0]).is_err());
        let wide = Gradients {
            weights: vec![Matrix::zeros(1, 2)],
            loss: 0.0,
        };
        assert!(plain_consensus(&[&a, &wide]).is_err());
    }
}
