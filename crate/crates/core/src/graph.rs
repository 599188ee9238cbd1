//! Undirected graph storage, subgraph views and the GCN propagation operator.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::matrix::Matrix;

/// Train / validation / test node masks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn empty(n: usize) -> Self {
        Self {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        }
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.train), c(&self.val), c(&self.test))
    }
}

/// Immutable undirected graph in CSR form with node features, labels and masks.
///
/// Every undirected edge is stored in both directions; self-loops are never
/// stored.
#[derive(Clone, Debug)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    features: Matrix,
    labels: Vec<Option<usize>>,
    num_classes: usize,
    masks: Masks,
}

/// Sorted, deduplicated symmetric CSR from an arbitrary edge list.
fn build_csr(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> (Vec<usize>, Vec<usize>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (u, v) in edges {
        if u != v {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut targets = Vec::new();
    offsets.push(0);
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
        targets.extend_from_slice(list);
        offsets.push(targets.len());
    }
    (offsets, targets)
}

impl Graph {
    /// Builds a graph; duplicate edges, reversed duplicates and self-loops are dropped.
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Matrix,
        labels: Vec<Option<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        if features.rows() != num_nodes {
            return Err(GadError::Dimension(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        if labels.len() != num_nodes {
            return Err(GadError::Dimension(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().flatten().find(|&&l| l >= num_classes) {
            return Err(GadError::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        for &(u, v) in edges {
            for id in [u, v] {
                if id >= num_nodes {
                    return Err(GadError::NodeOutOfRange { id, num_nodes });
                }
            }
        }
        let (offsets, targets) = build_csr(num_nodes, edges.iter().copied());
        Ok(Self {
            offsets,
            targets,
            features,
            labels,
            num_classes,
            masks: Masks::empty(num_nodes),
        })
    }

    /// Structure-only graph: one constant feature per node, no labels.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let features = Matrix::from_vec(num_nodes, 1, vec![1.0; num_nodes])?;
        Self::new(num_nodes, edges, features, vec![None; num_nodes], 0)
    }

    /// Attaches split masks. Masks must be pairwise disjoint and only cover labeled nodes.
    pub fn with_masks(mut self, masks: Masks) -> Result<Self> {
        let n = self.num_nodes();
        if masks.train.len() != n || masks.val.len() != n || masks.test.len() != n {
            return Err(GadError::InvalidSplit(format!("mask lengths differ from {n} nodes")));
        }
        for u in 0..n {
            let hits = [masks.train[u], masks.val[u], masks.test[u]]
                .iter()
                .filter(|&&b| b)
                .count();
            if hits > 1 {
                return Err(GadError::InvalidSplit(format!("node {u} is in more than one mask")));
            }
            if hits == 1 && self.labels[u].is_none() {
                return Err(GadError::InvalidSplit(format!("masked node {u} has no label")));
            }
        }
        self.masks = masks;
        Ok(self)
    }

    /// Replaces the feature matrix (same node count).
    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(GadError::Dimension(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.num_nodes()
            )));
        }
        self.features = features;
        Ok(self)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    /// Undirected edges as `(u, v)` with `u < v`, in CSR order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }
}

/// A node subset of a [`Graph`] with its induced local CSR.
///
/// Local ids follow ascending global id order. `owned[l]` is false for nodes
/// replicated from another partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubgraphView {
    local_ids: Vec<usize>,
    global_to_local: HashMap<usize, usize>,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    owned: Vec<bool>,
}

impl SubgraphView {
    pub fn num_nodes(&self) -> usize {
        self.local_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn local_ids(&self) -> &[usize] {
        &self.local_ids
    }

    pub fn to_local(&self, global: usize) -> Option<usize> {
        self.global_to_local.get(&global).copied()
    }

    pub fn neighbors(&self, local: usize) -> &[usize] {
        &self.targets[self.offsets[local]..self.offsets[local + 1]]
    }

    pub fn degree(&self, local: usize) -> usize {
        self.offsets[local + 1] - self.offsets[local]
    }

    pub fn owned(&self) -> &[bool] {
        &self.owned
    }

    pub fn num_owned(&self) -> usize {
        self.owned.iter().filter(|&&b| b).count()
    }

    /// Local edges as global `(u, v)` pairs with `u < v`.
    pub fn global_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for l in 0..self.num_nodes() {
            for &m in self.neighbors(l) {
                if l < m {
                    out.push((self.local_ids[l], self.local_ids[m]));
                }
            }
        }
        out
    }

    /// Feature rows of the local nodes, in local order.
    pub fn gather_features(&self, g: &Graph) -> Matrix {
        g.features().gather_rows(&self.local_ids)
    }
}

/// Induced subgraph over `node_ids`, with `owned_ids` flagged as owned.
pub fn induce_subgraph(g: &Graph, node_ids: &[usize], owned_ids: &[usize]) -> Result<SubgraphView> {
    let n = g.num_nodes();
    let mut local_ids: Vec<usize> = node_ids.to_vec();
    local_ids.sort_unstable();
    local_ids.dedup();
    if let Some(&id) = local_ids.iter().find(|&&id| id >= n) {
        return Err(GadError::NodeOutOfRange { id, num_nodes: n });
    }
    let global_to_local: HashMap<usize, usize> =
        local_ids.iter().enumerate().map(|(l, &gid)| (gid, l)).collect();
    let mut owned = vec![false; local_ids.len()];
    for &id in owned_ids {
        match global_to_local.get(&id) {
            Some(&l) => owned[l] = true,
            None if id >= n => return Err(GadError::NodeOutOfRange { id, num_nodes: n }),
            None => {
                return Err(GadError::Internal(format!(
                    "owned node {id} is not part of the induced node set"
                )))
            }
        }
    }
    let mut offsets = Vec::with_capacity(local_ids.len() + 1);
    let mut targets = Vec::new();
    offsets.push(0);
    for &gid in &local_ids {
        // neighbors are sorted globally and local ids preserve global order
        targets.extend(g.neighbors(gid).iter().filter_map(|v| global_to_local.get(v).copied()));
        offsets.push(targets.len());
    }
    Ok(SubgraphView {
        local_ids,
        global_to_local,
        offsets,
        targets,
        owned,
    })
}

/// The whole graph as a view with every node owned.
pub fn whole_graph_view(g: &Graph) -> SubgraphView {
    let ids: Vec<usize> = (0..g.num_nodes()).collect();
    induce_subgraph(g, &ids, &ids).expect("identity induction is always valid")
}

/// Edge density `2|E| / (|V|(|V|-1))`; defined as 0 below two nodes.
pub fn density(sub: &SubgraphView) -> f64 {
    let n = sub.num_nodes();
    if n < 2 {
        return 0.0;
    }
    2.0 * sub.num_edges() as f64 / (n as f64 * (n as f64 - 1.0))
}

/// `D̂^{-1/2}(A+I)D̂^{-1/2}` over a subgraph, stored as CSR with sorted columns.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.offsets[i]..self.offsets[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    /// `Ã · m`.
    pub fn spmm(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.num_nodes() {
            return Err(GadError::Dimension(format!(
                "adjacency over {} nodes applied to {} rows",
                self.num_nodes(),
                m.rows()
            )));
        }
        let mut out = Matrix::zeros(m.rows(), m.cols());
        for i in 0..self.num_nodes() {
            for (j, w) in self.row(i) {
                for (o, &x) in out.row_mut(i).iter_mut().zip(m.row(j)) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.num_nodes();
        let mut d = Matrix::zeros(n, n);
        for i in 0..n {
            for (j, w) in self.row(i) {
                d[(i, j)] = w;
            }
        }
        d
    }
}

/// Symmetric normalization with self-loops using local degrees.
pub fn normalized_adjacency(sub: &SubgraphView) -> NormalizedAdjacency {
    let n = sub.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / ((sub.degree(i) + 1) as f64).sqrt()).collect();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(2 * sub.num_edges() + n);
    let mut vals = Vec::with_capacity(cols.capacity());
    offsets.push(0);
    for i in 0..n {
        let mut self_done = false;
        for &j in sub.neighbors(i) {
            if !self_done && j > i {
                cols.push(i);
                vals.push(inv_sqrt[i] * inv_sqrt[i]);
                self_done = true;
            }
            cols.push(j);
            vals.push(inv_sqrt[i] * inv_sqrt[j]);
        }
        if !self_done {
            cols.push(i);
            vals.push(inv_sqrt[i] * inv_sqrt[i]);
        }
        offsets.push(cols.len());
    }
    NormalizedAdjacency { offsets, cols, vals }
}
