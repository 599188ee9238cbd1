//! Simulated synchronous multi-worker training.
//!
//! Each worker holds a copy of the parameters and a list of augmented
//! subgraphs. In every round the workers, in parallel, take their next
//! subgraph, run forward and backward over its owned training nodes, and hand
//! the gradient to a coordinator. The coordinator reduces the gradients
//! (ζ-weighted or plain mean, always in worker-id order) and every worker
//! applies the same SGD step, so the copies stay bit-identical.
//!
//! Communication is not performed but accounted: a worker must fetch every
//! remote node within `layers` hops of its boundary once per epoch, except
//! those it already holds as replicas.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use crate::augment::{assign_to_workers, candidate_replication_nodes, AugmentedSubgraph};
use crate::consensus::{plain_consensus, weighted_consensus, zeta, SubgraphWeight, ZetaParams};
use crate::error::{GadError, Result};
use crate::gcn::{self, argmax_rows, layer_dims, GcnParams, Gradients};
use crate::graph::{normalized_adjacency, whole_graph_view, Graph, NormalizedAdjacency};
use crate::matrix::Matrix;
use crate::partition::Partitioning;

/// Bytes per transferred feature value (32-bit floats on the wire).
pub const BYTES_PER_VALUE: u64 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusMode {
    /// Reduce and update after every synchronous round.
    #[default]
    PerRound,
    /// Accumulate every round's gradients and update once per epoch.
    PerEpoch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub layers: usize,
    pub hidden: usize,
    pub eta: f64,
    pub epochs: usize,
    pub workers: usize,
    /// ζ-weighted consensus when true, plain mean otherwise.
    pub weighted: bool,
    pub consensus: ConsensusMode,
    pub zeta: ZetaParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 16,
            eta: 1e-4,
            epochs: 200,
            workers: 1,
            weighted: true,
            consensus: ConsensusMode::PerRound,
            zeta: ZetaParams::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(GadError::Config("layers must be >= 1".into()));
        }
        if self.hidden == 0 {
            return Err(GadError::Config("hidden must be >= 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(GadError::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.workers == 0 {
            return Err(GadError::Config("workers must be >= 1".into()));
        }
        if !(self.zeta.beta > 0.0) {
            return Err(GadError::Config(format!("beta must be > 0, got {}", self.zeta.beta)));
        }
        if self.zeta.pair_cap < 2 {
            return Err(GadError::Config("pair_cap must be >= 2".into()));
        }
        Ok(())
    }
}

/// Remote-node demand of one partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartComm {
    pub part: usize,
    pub remote_without_augmentation: usize,
    pub remote_with_augmentation: usize,
    pub bytes_without_augmentation: u64,
    pub bytes_with_augmentation: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommMetrics {
    pub layers: usize,
    pub feature_dim: usize,
    pub parts: Vec<PartComm>,
    pub bytes_without_augmentation: u64,
    pub bytes_with_augmentation: u64,
}

impl CommMetrics {
    /// `1 − with/without`, or 0 when nothing needs fetching.
    pub fn reduction(&self) -> f64 {
        if self.bytes_without_augmentation == 0 {
            0.0
        } else {
            1.0 - self.bytes_with_augmentation as f64 / self.bytes_without_augmentation as f64
        }
    }
}

/// Per-epoch remote fetch volume with and without the replicas in `augmented`.
///
/// Partitions without an entry in `augmented` count as unaugmented.
pub fn communication_size(
    g: &Graph,
    p: &Partitioning,
    augmented: &[AugmentedSubgraph],
    layers: usize,
    feature_dim: usize,
) -> CommMetrics {
    let per_node = feature_dim as u64 * BYTES_PER_VALUE;
    let parts: Vec<PartComm> = (0..p.k)
        .into_par_iter()
        .map(|i| {
            let halo = candidate_replication_nodes(g, &p.assignment, i, layers);
            let replicas: std::collections::HashSet<usize> = augmented
                .iter()
                .filter(|a| a.part == i)
                .flat_map(|a| a.replicas())
                .collect();
            let with = halo.iter().filter(|v| !replicas.contains(v)).count();
            PartComm {
                part: i,
                remote_without_augmentation: halo.len(),
                remote_with_augmentation: with,
                bytes_without_augmentation: halo.len() as u64 * per_node,
                bytes_with_augmentation: with as u64 * per_node,
            }
        })
        .collect();
    CommMetrics {
        layers,
        feature_dim,
        bytes_without_augmentation: parts.iter().map(|c| c.bytes_without_augmentation).sum(),
        bytes_with_augmentation: parts.iter().map(|c| c.bytes_with_augmentation).sum(),
        parts,
    }
}

/// Fraction of masked nodes whose argmax prediction matches the label,
/// from a forward pass over the whole graph.
pub fn evaluate(params: &GcnParams, g: &Graph, mask: &[bool]) -> Result<f64> {
    let adj = normalized_adjacency(&whole_graph_view(g));
    let probs = gcn::forward(params, &adj, g.features())?.probs;
    accuracy(&probs, g.labels(), mask)
}

/// Accuracy of `probs` against `labels` over `mask`; unlabeled masked nodes count as wrong.
pub fn accuracy(probs: &Matrix, labels: &[Option<usize>], mask: &[bool]) -> Result<f64> {
    let pred = argmax_rows(probs);
    let mut total = 0usize;
    let mut correct = 0usize;
    for ((&m, &y), &p) in mask.iter().zip(labels).zip(&pred) {
        if m {
            total += 1;
            correct += usize::from(y == Some(p));
        }
    }
    if total == 0 {
        return Err(GadError::EmptyMask("evaluation"));
    }
    Ok(correct as f64 / total as f64)
}

/// A subgraph ready for training: adjacency, features, local labels and ζ.
#[derive(Clone, Debug)]
pub struct PreparedSubgraph {
    pub part: usize,
    pub adj: NormalizedAdjacency,
    pub features: Matrix,
    pub labels: Vec<Option<usize>>,
    /// Owned and in the training mask.
    pub loss_mask: Vec<bool>,
    pub train_nodes: usize,
    pub weight: SubgraphWeight,
}

/// Builds adjacency, features and ζ for every subgraph (in parallel).
pub fn prepare_subgraphs(g: &Graph, subs: &[AugmentedSubgraph], zeta_params: &ZetaParams, seed: u64) -> Result<Vec<PreparedSubgraph>> {
    subs.par_iter()
        .map(|s| {
            let view = &s.view;
            let features = view.gather_features(g);
            let labels: Vec<Option<usize>> = view.local_ids().iter().map(|&v| g.labels()[v]).collect();
            let loss_mask: Vec<bool> = view
                .local_ids()
                .iter()
                .zip(view.owned())
                .map(|(&v, &o)| o && g.masks().train[v])
                .collect();
            let weight = zeta(view, &features, zeta_params, seed ^ s.part as u64)?;
            Ok(PreparedSubgraph {
                part: s.part,
                adj: normalized_adjacency(view),
                train_nodes: loss_mask.iter().filter(|&&m| m).count(),
                features,
                labels,
                loss_mask,
                weight,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub val: Option<f64>,
    pub test: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the subgraphs that contributed this epoch, before updating.
    pub train_loss: f64,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
    pub comm_bytes: u64,
    pub contributions: usize,
    /// Excluded from JSON so that reports stay byte-reproducible.
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    NonFiniteLoss {
        epoch: usize,
        round: usize,
        worker: usize,
        part: usize,
    },
    /// The synchronized weights overflowed after an update.
    NonFiniteParameters { epoch: usize, round: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub evaluation: String,
    pub subgraph_parts: Vec<usize>,
    pub subgraph_nodes: Vec<usize>,
    pub subgraph_train_nodes: Vec<usize>,
    pub worker_of_subgraph: Vec<usize>,
    pub zetas: Vec<SubgraphWeight>,
    pub comm: CommMetrics,
    pub initial: Accuracy,
    pub epochs: Vec<EpochRecord>,
    /// Largest elementwise difference between worker parameter copies at any barrier.
    pub max_param_divergence: f64,
    pub status: TrainStatus,
}

impl TrainReport {
    pub fn is_completed(&self) -> bool {
        self.status == TrainStatus::Completed
    }

    pub fn final_accuracy(&self) -> Accuracy {
        self.epochs.last().map_or_else(
            || self.initial.clone(),
            |e| Accuracy {
                val: e.val_acc,
                test: e.test_acc,
            },
        )
    }

    /// Epoch with the highest validation accuracy (earliest on ties).
    pub fn best_val_epoch(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for e in &self.epochs {
            if let Some(v) = e.val_acc {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((e.epoch, v));
                }
            }
        }
        best.map(|(e, _)| e)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// First epoch whose loss drop from epoch 0 reaches `fraction` of the total drop.
    pub fn epochs_to_loss_fraction(&self, fraction: f64) -> Option<usize> {
        epochs_to_loss_fraction(&self.losses(), fraction)
    }
}

/// First index `e` with `l₀ − l_e ≥ fraction·(l₀ − l_last)`; `None` when the loss never drops.
pub fn epochs_to_loss_fraction(losses: &[f64], fraction: f64) -> Option<usize> {
    let (&first, &last) = (losses.first()?, losses.last()?);
    let drop = first - last;
    if !(drop > 0.0) {
        return None;
    }
    losses.iter().position(|&l| first - l >= fraction * drop)
}

/// Trained parameters plus the report.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub params: GcnParams,
}

struct Worker {
    subgraphs: Vec<usize>,
    params: GcnParams,
}

fn subgraph_gradient(params: &GcnParams, s: &PreparedSubgraph) -> Result<Gradients> {
    let cache = gcn::forward(params, &s.adj, &s.features)?;
    gcn::loss_and_backward(&cache, params, &s.adj, &s.labels, &s.loss_mask)
}

fn reduce(contribs: &[(usize, Gradients)], prepared: &[PreparedSubgraph], weighted: bool) -> Result<Gradients> {
    let grads: Vec<&Gradients> = contribs.iter().map(|(_, g)| g).collect();
    if weighted {
        let zetas: Vec<f64> = contribs.iter().map(|(s, _)| prepared[*s].weight.zeta).collect();
        weighted_consensus(&grads, &zetas)
    } else {
        plain_consensus(&grads)
    }
}

fn eval_all(params: &GcnParams, g: &Graph, adj: &NormalizedAdjacency) -> Result<Accuracy> {
    let probs = gcn::forward(params, adj, g.features())?.probs;
    let m = g.masks();
    let acc = |mask: &[bool]| -> Result<Option<f64>> {
        if mask.iter().any(|&x| x) {
            accuracy(&probs, g.labels(), mask).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(Accuracy {
        val: acc(&m.val)?,
        test: acc(&m.test)?,
    })
}

/// Runs synchronous training over `augmented` and evaluates on the full graph.
///
/// A non-finite loss stops training early; the returned report then carries
/// a [`TrainStatus::NonFiniteLoss`] status and every completed epoch.
pub fn train(g: &Graph, p: &Partitioning, augmented: &[AugmentedSubgraph], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if augmented.is_empty() {
        return Err(GadError::Config("no subgraphs to train on".into()));
    }
    if g.num_classes() == 0 {
        return Err(GadError::Config("graph has no classes to learn".into()));
    }
    let prepared = prepare_subgraphs(g, augmented, &cfg.zeta, cfg.seed)?;
    if prepared.iter().all(|s| s.train_nodes == 0) {
        return Err(GadError::EmptyMask("train"));
    }
    let sizes: Vec<usize> = augmented.iter().map(AugmentedSubgraph::num_nodes).collect();
    let worker_of = assign_to_workers(&sizes, cfg.workers);
    let init = GcnParams::glorot(&layer_dims(g.feature_dim(), cfg.hidden, g.num_classes(), cfg.layers), cfg.seed)?;
    let mut workers: Vec<Worker> = (0..cfg.workers)
        .map(|w| Worker {
            subgraphs: (0..augmented.len()).filter(|&s| worker_of[s] == w).collect(),
            params: init.clone(),
        })
        .collect();
    let rounds = workers.iter().map(|w| w.subgraphs.len()).max().unwrap_or(0);

    let comm = communication_size(g, p, augmented, cfg.layers, g.feature_dim());
    let full_adj = normalized_adjacency(&whole_graph_view(g));
    let mut report = TrainReport {
        config: cfg.clone(),
        evaluation: "centralized_full_graph".into(),
        subgraph_parts: augmented.iter().map(|a| a.part).collect(),
        subgraph_nodes: sizes,
        subgraph_train_nodes: prepared.iter().map(|s| s.train_nodes).collect(),
        worker_of_subgraph: worker_of,
        zetas: prepared.iter().map(|s| s.weight.clone()).collect(),
        initial: eval_all(&init, g, &full_adj)?,
        comm,
        epochs: Vec::with_capacity(cfg.epochs),
        max_param_divergence: 0.0,
        status: TrainStatus::Completed,
    };

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut losses = Vec::new();
        let mut pending: Vec<(usize, Gradients)> = Vec::new();
        for round in 0..rounds {
            let results: Vec<Option<Result<(usize, Gradients)>>> = workers
                .par_iter()
                .map(|w| {
                    let s = *w.subgraphs.get(round)?;
                    if prepared[s].train_nodes == 0 {
                        return None;
                    }
                    Some(subgraph_gradient(&w.params, &prepared[s]).map(|gr| (s, gr)))
                })
                .collect();
            let mut contribs = Vec::new();
            for (w, r) in results.into_iter().enumerate() {
                let Some(r) = r else { continue };
                let (s, gr) = r?;
                if !gr.is_finite() {
                    log::error!("non-finite loss on worker {w}, part {} (epoch {epoch}, round {round})", prepared[s].part);
                    report.status = TrainStatus::NonFiniteLoss {
                        epoch,
                        round,
                        worker: w,
                        part: prepared[s].part,
                    };
                    return Ok(TrainOutcome {
                        report,
                        params: workers[0].params.clone(),
                    });
                }
                losses.push(gr.loss);
                contribs.push((s, gr));
            }
            match cfg.consensus {
                ConsensusMode::PerRound if !contribs.is_empty() => {
                    let update = reduce(&contribs, &prepared, cfg.weighted)?;
                    apply(&mut workers, &update, cfg.eta, &mut report.max_param_divergence)?;
                    if !workers[0].params.is_finite() {
                        return Ok(non_finite_parameters(report, &workers, epoch, round));
                    }
                }
                ConsensusMode::PerRound => {}
                ConsensusMode::PerEpoch => pending.extend(contribs),
            }
        }
        if !pending.is_empty() {
            let update = reduce(&pending, &prepared, cfg.weighted)?;
            apply(&mut workers, &update, cfg.eta, &mut report.max_param_divergence)?;
            if !workers[0].params.is_finite() {
                return Ok(non_finite_parameters(report, &workers, epoch, rounds.saturating_sub(1)));
            }
        }
        let acc = eval_all(&workers[0].params, g, &full_adj)?;
        report.epochs.push(EpochRecord {
            epoch,
            train_loss: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            val_acc: acc.val,
            test_acc: acc.test,
            comm_bytes: report.comm.bytes_with_augmentation,
            contributions: losses.len(),
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        log::debug!("epoch {epoch}: loss {:.6}", report.epochs[epoch].train_loss);
    }
    Ok(TrainOutcome {
        report,
        params: workers[0].params.clone(),
    })
}

fn non_finite_parameters(mut report: TrainReport, workers: &[Worker], epoch: usize, round: usize) -> TrainOutcome {
    log::error!("parameters became non-finite (epoch {epoch}, round {round})");
    report.status = TrainStatus::NonFiniteParameters { epoch, round };
    TrainOutcome {
        report,
        params: workers[0].params.clone(),
    }
}

/// Broadcast step: every worker applies the same update, then copies are compared.
fn apply(workers: &mut [Worker], update: &Gradients, eta: f64, divergence: &mut f64) -> Result<()> {
    workers
        .par_iter_mut()
        .try_for_each(|w| -> Result<()> {
            w.params = gcn::sgd_update(&w.params, update, eta)?;
            Ok(())
        })?;
    let first = &workers[0].params;
    for w in &workers[1..] {
        *divergence = divergence.max(first.max_abs_diff(&w.params));
    }
    Ok(())
}
