//! Acceptance checks, one test per criterion.
//!
//! Every test prints a single verdict line:
//! `[PASS]`, `[FAIL]`, or `[UNVERIFIED]` when the criterion needs the Cora
//! dataset and it is not available. Point `GAD_CORA_DIR` at a directory
//! holding `cora.cites` and `cora.content` (default: `data/cora` at the
//! workspace root) to run the Cora criteria.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use gad_core::augment::{
    augment_all, augment_subgraph, boundary_nodes, candidate_replication_nodes, node_importance, AugmentConfig,
    AugmentedSubgraph, MonteCarloParams,
};
use gad_core::consensus::{zeta, ZetaParams};
use gad_core::dataset::{load_dataset_dir, LoadOptions};
use gad_core::gcn::{self, layer_dims, GcnParams};
use gad_core::graph::{normalized_adjacency, whole_graph_view, Graph};
use gad_core::partition::{edge_cut, partition_graph, random_balanced_assignment, PartitionConfig, Partitioning};
use gad_core::rng::{self, stage};
use gad_core::runtime::{communication_size, train, ConsensusMode, TrainConfig, TrainOutcome};
use gad_core::synth::{sbm_graph, SbmSpec};
use gad_core::Matrix;

fn verdict(id: u32, pass: Option<bool>, summary: &str) {
    let tag = match pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "UNVERIFIED",
    };
    println!("[{tag}] criterion {id}: {summary}");
}

fn cora_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("GAD_CORA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/cora"));
    dir.join("cora.cites").is_file().then_some(dir)
}

fn load_cora(dir: &std::path::Path, seed: u64) -> Graph {
    let opts = LoadOptions {
        seed,
        ..LoadOptions::default()
    };
    load_dataset_dir(dir, &opts).expect("Cora loads").graph
}

/// Partition, augment and train with the Cora settings of the first criterion.
fn cora_run(g: &Graph, seed: u64, augment: bool, epochs: usize) -> (Partitioning, Vec<AugmentedSubgraph>, TrainOutcome) {
    let p = partition_graph(
        g,
        &PartitionConfig {
            k: 4,
            seed,
            ..PartitionConfig::default()
        },
    )
    .unwrap();
    let acfg = AugmentConfig {
        layers: 3,
        enabled: augment,
        ..AugmentConfig::default()
    };
    let subs: Vec<_> = augment_all(g, &p, &acfg, seed).unwrap().into_iter().map(|a| a.subgraph).collect();
    let tcfg = TrainConfig {
        layers: 3,
        hidden: 128,
        eta: 1e-4,
        epochs,
        workers: 4,
        weighted: true,
        seed,
        ..TrainConfig::default()
    };
    let out = train(g, &p, &subs, &tcfg).unwrap();
    (p, subs, out)
}

/// Test accuracy at the epoch with the best validation accuracy.
fn selected_test_acc(out: &TrainOutcome) -> f64 {
    let r = &out.report;
    let e = r.best_val_epoch().expect("validation nodes exist");
    r.epochs[e].test_acc.expect("test nodes exist")
}

#[test]
fn criterion_01_cora_accuracy() {
    let Some(dir) = cora_dir() else {
        verdict(1, None, "Cora not found (set GAD_CORA_DIR); test accuracy >= 0.75 not checked");
        return;
    };
    let g = load_cora(&dir, 0);
    let start = Instant::now();
    let (_, _, out) = cora_run(&g, 0, true, 400);
    let secs = start.elapsed().as_secs_f64();
    let acc = selected_test_acc(&out);
    let best = out.report.epochs.iter().filter_map(|e| e.test_acc).fold(0.0, f64::max);
    let pass = acc >= 0.75 && secs < 300.0;
    verdict(
        1,
        Some(pass),
        &format!(
            "Cora test accuracy at best-val epoch {acc:.4} (max over epochs {best:.4}, final {:.4}) vs >= 0.75; {secs:.1}s vs < 300s",
            out.report.final_accuracy().test.unwrap_or(0.0)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_02_augmentation_accuracy_trend() {
    let Some(dir) = cora_dir() else {
        verdict(2, None, "Cora not found (set GAD_CORA_DIR); with/without augmentation accuracy not compared");
        return;
    };
    let mut with = Vec::new();
    let mut without = Vec::new();
    for seed in 0..5 {
        let g = load_cora(&dir, seed);
        with.push(selected_test_acc(&cora_run(&g, seed, true, 400).2));
        without.push(selected_test_acc(&cora_run(&g, seed, false, 400).2));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&with), mean(&without));
    let pass = a >= b;
    verdict(2, Some(pass), &format!("mean test accuracy over 5 seeds: with {a:.4}, without {b:.4}"));
    assert!(pass);
}

#[test]
fn criterion_03_communication_reduction() {
    // Cora-shaped stand-in (2708 nodes, 7 classes, average degree ~3.9) for context only.
    let spec = SbmSpec {
        block_sizes: vec![387, 387, 387, 387, 387, 387, 386],
        p_in: 0.0085,
        p_out: 0.00045,
        feature_dim: 0,
        p_topic: 0.0,
        p_noise: 0.0,
        seed: 0,
    };
    let s = sbm_graph(&spec).unwrap();
    let sp = partition_graph(&s, &PartitionConfig::default()).unwrap();
    let acfg = AugmentConfig {
        layers: 3,
        ..AugmentConfig::default()
    };
    let ssubs: Vec<_> = augment_all(&s, &sp, &acfg, 0).unwrap().into_iter().map(|a| a.subgraph).collect();
    let sc = communication_size(&s, &sp, &ssubs, 3, 1433);
    println!(
        "  info: Cora-shaped SBM stand-in ({} edges), k=4, layers=3, alpha=0.01: {} replicas, reduction {:.2}%",
        s.num_edges(),
        ssubs.iter().map(|a| a.replica_sources.len()).sum::<usize>(),
        100.0 * sc.reduction()
    );

    let Some(dir) = cora_dir() else {
        verdict(3, None, "Cora not found (set GAD_CORA_DIR); communication reduction >= 20% not checked");
        return;
    };
    let g = load_cora(&dir, 0);
    let p = partition_graph(&g, &PartitionConfig::default()).unwrap();
    let subs: Vec<_> = augment_all(&g, &p, &acfg, 0).unwrap().into_iter().map(|a| a.subgraph).collect();
    let c = communication_size(&g, &p, &subs, 3, g.feature_dim());
    let pass = c.reduction() >= 0.20;
    verdict(
        3,
        Some(pass),
        &format!(
            "Cora k=4: {} bytes with vs {} without augmentation, reduction {:.2}% vs >= 20%",
            c.bytes_with_augmentation,
            c.bytes_without_augmentation,
            100.0 * c.reduction()
        ),
    );
    assert!(pass);
}

/// The 50-partition SBM fixture shared by criteria 4 and 5.
fn sbm_fixture(seed: u64) -> Graph {
    sbm_graph(&SbmSpec {
        block_sizes: vec![250; 8],
        p_in: 0.03,
        p_out: 0.002,
        feature_dim: 64,
        p_topic: 0.2,
        p_noise: 0.03,
        seed,
    })
    .unwrap()
}

#[test]
fn criterion_04_weighted_consensus_convergence() {
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..5 {
        let g = sbm_fixture(seed);
        let p = partition_graph(
            &g,
            &PartitionConfig {
                k: 50,
                seed,
                ..PartitionConfig::default()
            },
        )
        .unwrap();
        let subs: Vec<_> = augment_all(&g, &p, &AugmentConfig::default(), seed)
            .unwrap()
            .into_iter()
            .map(|a| a.subgraph)
            .collect();
        let run = |weighted: bool| {
            let cfg = TrainConfig {
                layers: 2,
                hidden: 16,
                eta: 0.5,
                epochs: 100,
                workers: 4,
                weighted,
                seed,
                ..TrainConfig::default()
            };
            train(&g, &p, &subs, &cfg).unwrap().report.epochs_to_loss_fraction(0.9).unwrap_or(usize::MAX)
        };
        let (w, u) = (run(true), run(false));
        if w <= u {
            wins += 1;
        }
        detail.push(format!("{w}/{u}"));
    }
    let pass = wins >= 4;
    verdict(
        4,
        Some(pass),
        &format!(
            "epochs to 90% of loss drop, weighted/plain per seed [{}]: weighted <= plain in {wins} of 5 (need 4)",
            detail.join(", ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_partition_properties() {
    let mut balanced = true;
    let mut summary = Vec::new();
    let mut pass = true;
    for k in [4, 50] {
        let mut ours = Vec::new();
        let mut random = Vec::new();
        for seed in 0..20 {
            let g = sbm_fixture(0);
            let p = partition_graph(
                &g,
                &PartitionConfig {
                    k,
                    seed,
                    ..PartitionConfig::default()
                },
            )
            .unwrap();
            balanced &= p.is_balanced();
            assert!(p.is_balanced(), "k={k} seed={seed} violates the balance cap");
            ours.push(p.edge_cut);
            random.push(edge_cut(&g, &random_balanced_assignment(g.num_nodes(), k, seed)));
        }
        ours.sort_unstable();
        random.sort_unstable();
        let (mo, mr) = ((ours[9] + ours[10]) as f64 / 2.0, (random[9] + random[10]) as f64 / 2.0);
        pass &= mo < mr;
        summary.push(format!("k={k}: median cut {mo} vs random {mr}"));
    }
    let pass = pass && balanced;
    verdict(
        5,
        Some(pass),
        &format!("balance held on all 40 runs: {balanced}; {}", summary.join("; ")),
    );
    assert!(pass);
}

/// Exact probability that a walk from a uniform boundary node visits each candidate.
fn exact_visit_probability(g: &Graph, boundary: &[usize], candidates: &[usize], layers: usize) -> BTreeMap<usize, f64> {
    fn walk(g: &Graph, path: &mut Vec<usize>, p: f64, left: usize, out: &mut BTreeMap<usize, f64>) {
        let u = *path.last().unwrap();
        if left == 0 || g.degree(u) == 0 {
            let mut seen = path.clone();
            seen.sort_unstable();
            seen.dedup();
            for v in seen {
                if let Some(x) = out.get_mut(&v) {
                    *x += p;
                }
            }
            return;
        }
        let d = g.degree(u) as f64;
        for &v in g.neighbors(u) {
            path.push(v);
            walk(g, path, p / d, left - 1, out);
            path.pop();
        }
    }
    let mut out: BTreeMap<usize, f64> = candidates.iter().map(|&c| (c, 0.0)).collect();
    for &b in boundary {
        walk(g, &mut vec![b], 1.0 / boundary.len() as f64, layers, &mut out);
    }
    out
}

#[test]
fn criterion_06_monte_carlo_importance() {
    let two_triangles = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)]).unwrap();
    let three_squares = Graph::from_edges(
        12,
        &[
            (0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (4, 5), (5, 6), (6, 7), (7, 4), (8, 9), (9, 10), (10, 11), (11, 8),
            (3, 4), (2, 5), (7, 8), (6, 9), (1, 10),
        ],
    )
    .unwrap();
    let fixtures = [
        ("two triangles", two_triangles, vec![0, 0, 0, 1, 1, 1], 2),
        ("three squares", three_squares.clone(), vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2], 2),
        ("three squares, 3 layers", three_squares, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2], 3),
    ];
    let params = MonteCarloParams::default();
    let mut worst_rate = 100;
    let mut lines = Vec::new();
    for (name, g, assignment, layers) in &fixtures {
        let k = assignment.iter().max().unwrap() + 1;
        for part in 0..k {
            let b = boundary_nodes(g, assignment, part);
            let c = candidate_replication_nodes(g, assignment, part, *layers);
            let exact = exact_visit_probability(g, &b, &c, *layers);
            let mean = exact.values().sum::<f64>() / exact.len() as f64;
            let bound = 2.0 * params.err_target * mean;
            let within = (0..100u64)
                .filter(|&r| {
                    let mut rng = rng::stream(r, stage::WALKS, part as u64);
                    let (t, _) = node_importance(g, &b, &c, *layers, &params, &mut rng);
                    c.iter().all(|v| (t.get(*v).unwrap() - exact[v]).abs() <= bound)
                })
                .count();
            worst_rate = worst_rate.min(within);
            lines.push(format!("{name} part {part}: {within}/100"));
        }
    }
    let pass = worst_rate >= 95;
    verdict(
        6,
        Some(pass),
        &format!("reruns within 2*E*mean of the exact walk enumeration: {}", lines.join(", ")),
    );
    assert!(pass);
}

#[test]
fn criterion_07_zeta_fidelity() {
    let regular = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
    let skewed = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2)]).unwrap();
    let z = |g: &Graph| zeta(&whole_graph_view(g), &Matrix::zeros(4, 3), &ZetaParams::default(), 0).unwrap().zeta;
    let (a, b) = (z(&regular), z(&skewed));
    // The published values 3.75 and 3.59 (3.59375 unrounded) are ours times ten.
    let ratio_err = (a / b - 3.75 / 3.59375).abs();
    let scale = 3.75 / a;
    let pass = a > b && ratio_err <= 1e-9 && ((scale * b) - 3.59).abs() < 0.005;
    verdict(
        7,
        Some(pass),
        &format!("zeta(2,2,2,2) = {a}, zeta(3,2,2,1) = {b}; x{scale} gives 3.75 > {:.5}; ratio error {ratio_err:.1e}", scale * b),
    );
    assert!(pass);
}

fn six_node_fixture() -> (Graph, Vec<bool>) {
    let edges = [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3), (1, 4)];
    let mut r = rng::stream(11, "fixture", 0);
    let x = Matrix::from_vec(6, 5, (0..30).map(|_| rand::Rng::gen_range(&mut r, -1.0..1.0)).collect()).unwrap();
    let labels = vec![Some(0), Some(1), Some(2), Some(0), Some(1), Some(2)];
    let g = Graph::new(6, &edges, x, labels, 3).unwrap();
    (g, vec![true, true, false, true, true, true])
}

#[test]
fn criterion_08_gradient_check() {
    let (g, mask) = six_node_fixture();
    let adj = normalized_adjacency(&whole_graph_view(&g));
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for layers in [2, 3, 4] {
        for hidden in [8, 16] {
            let params = GcnParams::glorot(&layer_dims(5, hidden, 3, layers), 100 + layers as u64).unwrap();
            let cache = gcn::forward(&params, &adj, g.features()).unwrap();
            let grads = gcn::loss_and_backward(&cache, &params, &adj, g.labels(), &mask).unwrap();
            let loss_at = |w: Vec<Matrix>| {
                let p = GcnParams::from_weights(w).unwrap();
                let c = gcn::forward(&p, &adj, g.features()).unwrap();
                gcn::masked_loss(&c.probs, g.labels(), &mask).unwrap()
            };
            for l in 0..layers {
                for idx in 0..params.weights()[l].as_slice().len() {
                    let mut plus = params.weights().to_vec();
                    plus[l].as_mut_slice()[idx] += h;
                    let mut minus = params.weights().to_vec();
                    minus[l].as_mut_slice()[idx] -= h;
                    let numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
                    let analytic = grads.weights[l].as_slice()[idx];
                    let scale = numeric.abs().max(analytic.abs());
                    // entries that are zero both ways (dead ReLU paths) carry no relative information
                    if scale > 1e-9 {
                        worst = worst.max((numeric - analytic).abs() / scale);
                    }
                }
            }
        }
    }
    let pass = worst <= 1e-4;
    verdict(
        8,
        Some(pass),
        &format!("worst relative error over L in {{2,3,4}}, h in {{8,16}}: {worst:.2e} vs <= 1e-4"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_distributed_serial_equivalence() {
    let g = sbm_graph(&SbmSpec {
        block_sizes: vec![40, 40, 40],
        p_in: 0.15,
        p_out: 0.01,
        feature_dim: 24,
        p_topic: 0.3,
        p_noise: 0.05,
        seed: 4,
    })
    .unwrap();
    let p = Partitioning::from_assignment(&g, vec![0; g.num_nodes()], 1, 0.0).unwrap();
    let whole = augment_subgraph(&g, &p, 0, &[], 0).unwrap();
    let adj = normalized_adjacency(&whole_graph_view(&g));
    let mut worst: f64 = 0.0;
    for layers in [2, 3, 4] {
        let cfg = TrainConfig {
            layers,
            hidden: 16,
            eta: 0.2,
            epochs: 20,
            workers: 1,
            weighted: false,
            seed: 9,
            ..TrainConfig::default()
        };
        let out = train(&g, &p, std::slice::from_ref(&whole), &cfg).unwrap();
        let mut params = GcnParams::glorot(&layer_dims(g.feature_dim(), 16, g.num_classes(), layers), 9).unwrap();
        for e in 0..20 {
            let cache = gcn::forward(&params, &adj, g.features()).unwrap();
            let grads = gcn::loss_and_backward(&cache, &params, &adj, g.labels(), &g.masks().train).unwrap();
            worst = worst.max((grads.loss - out.report.epochs[e].train_loss).abs());
            params = gcn::sgd_update(&params, &grads, 0.2).unwrap();
        }
        worst = worst.max(params.max_abs_diff(&out.params));
    }
    let pass = worst <= 1e-12;
    verdict(
        9,
        Some(pass),
        &format!("1 worker / 1 partition vs single-machine loop, 20 epochs, L in {{2,3,4}}: max deviation {worst:.1e} vs <= 1e-12"),
    );
    assert!(pass);
}

fn pipeline_artifacts(seed: u64) -> Vec<String> {
    let g = sbm_graph(&SbmSpec {
        block_sizes: vec![60, 60, 60],
        p_in: 0.1,
        p_out: 0.01,
        feature_dim: 24,
        p_topic: 0.3,
        p_noise: 0.05,
        seed,
    })
    .unwrap();
    let p = partition_graph(
        &g,
        &PartitionConfig {
            k: 6,
            seed,
            ..PartitionConfig::default()
        },
    )
    .unwrap();
    let acfg = AugmentConfig {
        alpha: 0.1,
        ..AugmentConfig::default()
    };
    let aug = augment_all(&g, &p, &acfg, seed).unwrap();
    let records: Vec<_> = aug.iter().map(|a| (a.subgraph.to_record(), a.importance.clone())).collect();
    let subs: Vec<_> = aug.into_iter().map(|a| a.subgraph).collect();
    let mut out = vec![serde_json::to_string(&p).unwrap(), serde_json::to_string(&records).unwrap()];
    for consensus in [ConsensusMode::PerRound, ConsensusMode::PerEpoch] {
        let cfg = TrainConfig {
            epochs: 15,
            eta: 0.3,
            workers: 3,
            consensus,
            seed,
            ..TrainConfig::default()
        };
        let t = train(&g, &p, &subs, &cfg).unwrap();
        out.push(serde_json::to_string(&t.report).unwrap());
        let mut blob = Vec::new();
        t.params.write_checkpoint(&mut blob).unwrap();
        out.push(format!("{blob:?}"));
    }
    out
}

#[test]
fn criterion_10_determinism() {
    let mut identical = true;
    for seed in [1, 2] {
        identical &= pipeline_artifacts(seed) == pipeline_artifacts(seed);
    }
    verdict(
        10,
        Some(identical),
        "partition, augmentation, report and checkpoint bytes identical across reruns (2 seeds, both consensus modes)",
    );
    assert!(identical);
}
