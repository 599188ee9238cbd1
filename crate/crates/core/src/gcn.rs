//! Dense L-layer graph convolutional network.
//!
//! Layer `l` computes `H⁽ˡ⁾ = σ(Ã·H⁽ˡ⁻¹⁾·W⁽ˡ⁾)` with ReLU on hidden layers and a
//! row softmax on the last one. The loss is masked mean categorical
//! cross-entropy and the backward pass is exact reverse-mode differentiation
//! of that chain. Everything is `f64` and pure: the same inputs always give
//! bit-identical outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::error::{GadError, Result};
use crate::graph::NormalizedAdjacency;
use crate::matrix::Matrix;
use crate::rng::{self, stage};

/// Lower clip applied to `ŷ` inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Applies [`PROB_FLOOR`]; unlike `f64::max` this keeps NaN visible.
fn floored(p: f64) -> f64 {
    if p < PROB_FLOOR {
        PROB_FLOOR
    } else {
        p
    }
}

/// How the weights were initialized; echoed in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitSpec {
    pub seed: u64,
    pub scheme: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnParams {
    weights: Vec<Matrix>,
    init: InitSpec,
}

impl GcnParams {
    /// Glorot-uniform weights for the layer widths `dims = [in, h, …, h, out]`.
    pub fn glorot(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = rng::stream(seed, stage::INIT, 0);
        let weights = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let data = (0..w[0] * w[1]).map(|_| rng.gen_range(-limit..=limit)).collect();
                Matrix::from_vec(w[0], w[1], data).expect("sized by construction")
            })
            .collect();
        Ok(Self {
            weights,
            init: InitSpec {
                seed,
                scheme: "glorot_uniform".into(),
            },
        })
    }

    /// Wraps explicit weight matrices, checking that the widths chain.
    pub fn from_weights(weights: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(GadError::Dimension("a GCN needs at least one layer".into()));
        }
        for (l, pair) in weights.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(GadError::Dimension(format!(
                    "layer {} outputs {} columns but layer {} expects {} rows",
                    l + 1,
                    pair[0].cols(),
                    l + 2,
                    pair[1].rows()
                )));
            }
        }
        if let Some(l) = weights.iter().position(|w| !w.is_finite()) {
            return Err(GadError::Dimension(format!("layer {} has non-finite weights", l + 1)));
        }
        Ok(Self {
            weights,
            init: InitSpec {
                seed: 0,
                scheme: "explicit".into(),
            },
        })
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn init(&self) -> &InitSpec {
        &self.init
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.weights[0].rows()];
        d.extend(self.weights.iter().map(Matrix::cols));
        d
    }

    pub fn num_classes(&self) -> usize {
        self.weights.last().map_or(0, Matrix::cols)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
    }

    /// Largest elementwise difference to `other` (∞ if shapes differ).
    pub fn max_abs_diff(&self, other: &GcnParams) -> f64 {
        if self.dims() != other.dims() {
            return f64::INFINITY;
        }
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Writes a one-line JSON shape header followed by every weight as
    /// little-endian `f64`, layer by layer in row-major order.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let header = CheckpointHeader {
            dims: self.dims(),
            init: self.init.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        let mut buf = Vec::with_capacity(8 * self.weights.iter().map(|w| w.as_slice().len()).sum::<usize>() + 1);
        buf.push(b'\n');
        for w in &self.weights {
            for x in w.as_slice() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| GadError::io("<checkpoint>", e))
    }

    pub fn read_checkpoint<R: BufRead>(mut input: R) -> Result<Self> {
        let mut line = String::new();
        input
            .read_line(&mut line)
            .map_err(|e| GadError::io("<checkpoint>", e))?;
        let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
        check_dims(&header.dims)?;
        let mut weights = Vec::with_capacity(header.dims.len() - 1);
        for w in header.dims.windows(2) {
            let mut bytes = vec![0u8; 8 * w[0] * w[1]];
            input
                .read_exact(&mut bytes)
                .map_err(|e| GadError::io("<checkpoint>", e))?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            weights.push(Matrix::from_vec(w[0], w[1], data)?);
        }
        let mut params = Self::from_weights(weights)?;
        params.init = header.init;
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    dims: Vec<usize>,
    init: InitSpec,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(GadError::Dimension("need an input and an output width".into()));
    }
    if dims.contains(&0) {
        return Err(GadError::Dimension(format!("zero layer width in {dims:?}")));
    }
    Ok(())
}

/// Layer widths for an `layers`-deep network with a shared hidden width.
pub fn layer_dims(input: usize, hidden: usize, classes: usize, layers: usize) -> Vec<usize> {
    let mut d = vec![input];
    d.extend(std::iter::repeat_n(hidden, layers.saturating_sub(1)));
    d.push(classes);
    d
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    /// `H⁽⁰⁾ … H⁽ᴸ⁻¹⁾`: the input to each layer.
    pub inputs: Vec<Matrix>,
    /// `Ã·H⁽ˡ⁻¹⁾·W⁽ˡ⁾` for every layer.
    pub pre_activations: Vec<Matrix>,
    /// Row-softmax of the last pre-activation.
    pub probs: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub loss: f64,
}

impl Gradients {
    pub fn zeros_like(params: &GcnParams) -> Self {
        Self {
            weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            loss: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.loss.is_finite() && self.weights.iter().all(Matrix::is_finite)
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.weights.iter().map(Matrix::shape).collect()
    }
}

pub fn forward(params: &GcnParams, adj: &NormalizedAdjacency, features: &Matrix) -> Result<ForwardCache> {
    if features.rows() != adj.num_nodes() {
        return Err(GadError::Dimension(format!(
            "{} feature rows for {} nodes",
            features.rows(),
            adj.num_nodes()
        )));
    }
    if features.cols() != params.weights[0].rows() {
        return Err(GadError::Dimension(format!(
            "{} feature columns for input width {}",
            features.cols(),
            params.weights[0].rows()
        )));
    }
    let last = params.num_layers() - 1;
    let mut inputs = Vec::with_capacity(params.num_layers());
    let mut pre_activations = Vec::with_capacity(params.num_layers());
    let mut h = features.clone();
    for (l, w) in params.weights.iter().enumerate() {
        let z = adj.spmm(&h.matmul(w)?)?;
        inputs.push(h);
        h = if l == last { z.softmax_rows() } else { z.relu() };
        pre_activations.push(z);
    }
    Ok(ForwardCache {
        inputs,
        pre_activations,
        probs: h,
    })
}

/// Masked mean cross-entropy over the nodes with `loss_mask[i]`.
pub fn masked_loss(probs: &Matrix, labels: &[Option<usize>], loss_mask: &[bool]) -> Result<f64> {
    let rows = masked_rows(probs, labels, loss_mask)?;
    let total: f64 = rows
        .iter()
        .map(|&(i, y)| -floored(probs[(i, y)]).ln())
        .sum();
    Ok(total / rows.len() as f64)
}

fn masked_rows(probs: &Matrix, labels: &[Option<usize>], loss_mask: &[bool]) -> Result<Vec<(usize, usize)>> {
    if labels.len() != probs.rows() || loss_mask.len() != probs.rows() {
        return Err(GadError::Dimension(format!(
            "{} labels and {} mask entries for {} nodes",
            labels.len(),
            loss_mask.len(),
            probs.rows()
        )));
    }
    let mut rows = Vec::new();
    for (i, (&m, &y)) in loss_mask.iter().zip(labels).enumerate() {
        if !m {
            continue;
        }
        let y = y.ok_or_else(|| GadError::InvalidSplit(format!("masked node {i} has no label")))?;
        if y >= probs.cols() {
            return Err(GadError::LabelOutOfRange {
                label: y,
                classes: probs.cols(),
            });
        }
        rows.push((i, y));
    }
    if rows.is_empty() {
        return Err(GadError::EmptyMask("loss"));
    }
    Ok(rows)
}

/// Loss and `∂L/∂W⁽ˡ⁾` for every layer.
///
/// With `G = Ã·∂L/∂Z⁽ˡ⁾` (Ã is symmetric) the layer gradient is `H⁽ˡ⁻¹⁾ᵀ·G` and
/// the signal passed down is `G·W⁽ˡ⁾ᵀ`, masked by the ReLU of the layer below.
pub fn loss_and_backward(
    cache: &ForwardCache,
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    labels: &[Option<usize>],
    loss_mask: &[bool],
) -> Result<Gradients> {
    let probs = &cache.probs;
    let rows = masked_rows(probs, labels, loss_mask)?;
    let m = rows.len() as f64;
    let mut loss = 0.0;
    let mut dz = Matrix::zeros(probs.rows(), probs.cols());
    for &(i, y) in &rows {
        let p = probs[(i, y)];
        loss -= floored(p).ln();
        // Below the floor the clipped loss is flat in the logits.
        if p >= PROB_FLOOR {
            let r = dz.row_mut(i);
            r.copy_from_slice(probs.row(i));
            r[y] -= 1.0;
            for x in r.iter_mut() {
                *x /= m;
            }
        }
    }
    loss /= m;

    let mut grads = vec![Matrix::zeros(0, 0); params.num_layers()];
    for l in (0..params.num_layers()).rev() {
        let g = adj.spmm(&dz)?;
        grads[l] = cache.inputs[l].t_matmul(&g)?;
        if l > 0 {
            let mut dh = g.matmul_t(&params.weights[l])?;
            let z = &cache.pre_activations[l - 1];
            for (d, &zv) in dh.as_mut_slice().iter_mut().zip(z.as_slice()) {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            }
            dz = dh;
        }
    }
    Ok(Gradients { weights: grads, loss })
}

/// `W ← W − η·∇W`, returning new parameters.
pub fn sgd_update(params: &GcnParams, grads: &Gradients, eta: f64) -> Result<GcnParams> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(GadError::Config(format!("learning rate must be positive, got {eta}")));
    }
    if grads.shapes() != params.weights.iter().map(Matrix::shape).collect::<Vec<_>>() {
        return Err(GadError::Dimension("gradient shapes do not match parameters".into()));
    }
    let mut next = params.clone();
    for (w, g) in next.weights.iter_mut().zip(&grads.weights) {
        w.axpy(-eta, g)?;
    }
    Ok(next)
}

/// Row-wise argmax with ties going to the lowest class id.
pub fn argmax_rows(probs: &Matrix) -> Vec<usize> {
    (0..probs.rows())
        .map(|i| {
            let r = probs.row(i);
            let mut best = 0;
            for (c, &x) in r.iter().enumerate().skip(1) {
                if x > r[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalized_adjacency, whole_graph_view, Graph};

    fn path3() -> NormalizedAdjacency {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        normalized_adjacency(&whole_graph_view(&g))
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let p = GcnParams::from_weights(vec![Matrix::zeros(2, 3)]).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.0], vec![3.0, 1.0]]).unwrap();
        let c = forward(&p, &path3(), &x).unwrap();
        for v in c.probs.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let loss = masked_loss(&c.probs, &[Some(0), Some(1), Some(2)], &[true; 3]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_node_identity_layer() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let adj = normalized_adjacency(&whole_graph_view(&g));
        let p = GcnParams::from_weights(vec![Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap()]).unwrap();
        let c = forward(&p, &adj, &Matrix::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        assert_eq!(c.probs.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn confident_correct_prediction_has_near_zero_loss() {
        let probs = Matrix::from_rows(&[vec![1.0, 0.0], vec![1e-300, 1.0]]).unwrap();
        assert!(masked_loss(&probs, &[Some(0), Some(1)], &[true, true]).unwrap() < 1e-12);
        // clipped: −ln(1e-12)
        let l = masked_loss(&probs, &[Some(1), None], &[true, false]).unwrap();
        assert!((l - 12.0 * 10f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn loss_errors() {
        let probs = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(matches!(masked_loss(&probs, &[Some(0)], &[false]), Err(GadError::EmptyMask(_))));
        assert!(matches!(
            masked_loss(&probs, &[Some(2)], &[true]),
            Err(GadError::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn nan_is_not_hidden_by_the_floor_or_relu() {
        let probs = Matrix::from_rows(&[vec![f64::NAN, 0.5]]).unwrap();
        assert!(masked_loss(&probs, &[Some(0)], &[true]).unwrap().is_nan());
        let tiny = Matrix::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert_eq!(masked_loss(&tiny, &[Some(0)], &[true]).unwrap(), -PROB_FLOOR.ln());
        assert!(Matrix::from_rows(&[vec![f64::NAN]]).unwrap().relu().row(0)[0].is_nan());
    }

    #[test]
    fn sgd_arithmetic() {
        let p = GcnParams::from_weights(vec![Matrix::from_rows(&[vec![1.0]]).unwrap()]).unwrap();
        let g = Gradients {
            weights: vec![Matrix::from_rows(&[vec![2.0]]).unwrap()],
            loss: 0.0,
        };
        let q = sgd_update(&p, &g, 0.1).unwrap();
        assert!((q.weights()[0][(0, 0)] - 0.8).abs() < 1e-15);
        assert_eq!(p.weights()[0][(0, 0)], 1.0);
        assert_eq!(sgd_update(&p, &Gradients::zeros_like(&p), 0.1).unwrap(), p);
        assert!(sgd_update(&p, &g, 0.0).is_err());
    }

    #[test]
    fn glorot_bounds_and_dims() {
        let p = GcnParams::glorot(&[5, 8, 8, 3], 7).unwrap();
        assert_eq!(p.dims(), vec![5, 8, 8, 3]);
        let limit = (6.0f64 / 13.0).sqrt();
        assert!(p.weights()[0].as_slice().iter().all(|x| x.abs() <= limit));
        assert_eq!(p, GcnParams::glorot(&[5, 8, 8, 3], 7).unwrap());
        assert_ne!(p, GcnParams::glorot(&[5, 8, 8, 3], 8).unwrap());
        assert_eq!(layer_dims(5, 8, 3, 3), vec![5, 8, 8, 3]);
        assert_eq!(layer_dims(5, 8, 3, 1), vec![5, 3]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = GcnParams::glorot(&[4, 6, 2], 3).unwrap();
        let mut buf = Vec::new();
        p.write_checkpoint(&mut buf).unwrap();
        let q = GcnParams::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(p, q);
        assert!(GcnParams::read_checkpoint(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        let m = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        assert_eq!(argmax_rows(&m), vec![0, 1]);
    }
}
