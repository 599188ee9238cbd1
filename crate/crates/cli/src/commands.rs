//! The four pipeline commands and their JSON artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gad_core::augment::{augment_all, AugmentedSubgraph, SubgraphRecord};
use gad_core::dataset::{load_dataset_dir, Dataset};
use gad_core::partition::{partition_graph, Partitioning};
use gad_core::runtime::{train as run_training, TrainReport, TrainStatus};
use serde::{Deserialize, Serialize};

use crate::config::Config;

pub enum Outcome {
    Ok,
    NumericalFailure(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: PathBuf,
    pub nodes: usize,
    pub undirected_edges: usize,
    pub edge_lines: usize,
    pub feature_dim: usize,
    pub classes: usize,
}

impl DatasetInfo {
    fn new(path: &Path, d: &Dataset) -> Self {
        Self {
            path: path.to_path_buf(),
            nodes: d.graph.num_nodes(),
            undirected_edges: d.stats.undirected_edges,
            edge_lines: d.stats.edge_lines,
            feature_dim: d.graph.feature_dim(),
            classes: d.graph.num_classes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub k: usize,
    pub edge_cut: usize,
    pub part_sizes: Vec<usize>,
    pub cap: u64,
    pub balanced: bool,
    pub imbalance: f64,
    pub restarts_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionArtifact {
    pub config: Config,
    pub dataset: DatasetInfo,
    pub summary: PartitionSummary,
    pub partitioning: Partitioning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub part: usize,
    pub owned_nodes: usize,
    pub boundary_nodes: usize,
    pub candidates: usize,
    pub budget: usize,
    pub replicas: usize,
    pub walks: usize,
    pub pilot_walks: usize,
    pub truncated_walks: usize,
    pub shortfall: usize,
    pub sigma: f64,
    pub mean: f64,
    pub importance: BTreeMap<usize, f64>,
    pub subgraph: SubgraphRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentArtifact {
    pub config: Config,
    pub dataset: DatasetInfo,
    pub partitioning: Partitioning,
    pub parts: Vec<PartRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportArtifact {
    pub config: Config,
    pub dataset: DatasetInfo,
    pub report: TrainReport,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} is not a valid {what}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `dir/stem.ext` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn load(config: &Config, data: Option<PathBuf>) -> Result<(PathBuf, Dataset)> {
    let dir = data
        .or_else(|| config.data.clone())
        .context("no dataset directory given")?;
    let d = load_dataset_dir(&dir, &config.load_options()).with_context(|| format!("loading {}", dir.display()))?;
    Ok((dir, d))
}

fn check_same_graph(info: &DatasetInfo, d: &Dataset) -> Result<()> {
    if info.nodes != d.graph.num_nodes() || info.undirected_edges != d.stats.undirected_edges {
        bail!(
            "dataset has {} nodes / {} edges but the artifact was built on {} / {}",
            d.graph.num_nodes(),
            d.stats.undirected_edges,
            info.nodes,
            info.undirected_edges
        );
    }
    Ok(())
}

pub fn partition(mut config: Config, data: Option<PathBuf>, output: &Path) -> Result<Outcome> {
    let (dir, d) = load(&config, data)?;
    config.data = Some(dir.clone());
    let g = &d.graph;
    let pc = config.partition_config(g.num_nodes());
    config.k = pc.k;
    let p = partition_graph(g, &pc)?;
    let summary = PartitionSummary {
        k: p.k,
        edge_cut: p.edge_cut,
        part_sizes: p.part_sizes(),
        cap: p.cap(),
        balanced: p.is_balanced(),
        imbalance: p.imbalance(),
        restarts_used: p.restarts_used,
    };
    let artifact = PartitionArtifact {
        dataset: DatasetInfo::new(&dir, &d),
        config,
        summary,
        partitioning: p,
    };
    write_json(output, &artifact)?;
    write_json(&output.with_file_name("node_ids.json"), &d.node_names)?;
    println!("{}", serde_json::to_string_pretty(&artifact.summary)?);
    Ok(Outcome::Ok)
}

pub fn augment(
    partition_file: &Path,
    data: Option<PathBuf>,
    output: &Path,
    resolve: impl FnOnce(Config) -> Result<Config>,
) -> Result<Outcome> {
    let art: PartitionArtifact = read_json(partition_file, "partition file")?;
    let mut config = resolve(art.config.clone())?;
    config.data = art.config.data.clone();
    if config.k != art.partitioning.k {
        log::warn!("k = {} ignored: the partition file has {} parts", config.k, art.partitioning.k);
        config.k = art.partitioning.k;
    }
    let (dir, d) = load(&config, data)?;
    check_same_graph(&art.dataset, &d)?;
    let p = Partitioning::from_assignment(&d.graph, art.partitioning.assignment.clone(), art.partitioning.k, art.partitioning.epsilon)?;
    let results = augment_all(&d.graph, &p, &config.augment_config(), config.seed)?;
    let parts: Vec<PartRecord> = results
        .into_iter()
        .map(|a| PartRecord {
            part: a.subgraph.part,
            owned_nodes: a.subgraph.view.num_owned(),
            boundary_nodes: a.boundary.len(),
            candidates: a.candidates.len(),
            budget: a.subgraph.budget,
            replicas: a.subgraph.replica_sources.len(),
            walks: a.importance.walks,
            pilot_walks: a.importance.pilot_walks,
            truncated_walks: a.truncated_walks,
            shortfall: a.selection.shortfall,
            sigma: a.importance.sigma,
            mean: a.importance.mean,
            importance: a.importance.values,
            subgraph: a.subgraph.to_record(),
        })
        .collect();
    for r in &parts {
        if r.replicas > r.budget {
            bail!("part {} selected {} replicas over a budget of {}", r.part, r.replicas, r.budget);
        }
    }
    let summary: Vec<_> = parts
        .iter()
        .map(|r| serde_json::json!({"part": r.part, "budget": r.budget, "replicas": r.replicas, "walks": r.walks}))
        .collect();
    let artifact = AugmentArtifact {
        dataset: DatasetInfo::new(&dir, &d),
        config,
        partitioning: p,
        parts,
    };
    write_json(output, &artifact)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(Outcome::Ok)
}

pub fn train(
    augmented_file: &Path,
    data: Option<PathBuf>,
    output: &Path,
    resolve: impl FnOnce(Config) -> Result<Config>,
) -> Result<Outcome> {
    let art: AugmentArtifact = read_json(augmented_file, "augmentation file")?;
    let mut config = resolve(art.config.clone())?;
    config.data = art.config.data.clone();
    config.k = art.partitioning.k;
    let (dir, d) = load(&config, data)?;
    check_same_graph(&art.dataset, &d)?;
    let g = &d.graph;
    let p = Partitioning::from_assignment(g, art.partitioning.assignment.clone(), art.partitioning.k, art.partitioning.epsilon)?;
    let subs: Vec<AugmentedSubgraph> = art
        .parts
        .iter()
        .map(|r| AugmentedSubgraph::from_record(g, &r.subgraph))
        .collect::<gad_core::Result<_>>()?;
    if config.layers != art.config.layers {
        log::warn!(
            "training with {} layers on halos selected for {} layers",
            config.layers,
            art.config.layers
        );
    }
    let outcome = run_training(g, &p, &subs, &config.train_config())?;
    let report = outcome.report;

    let mut csv = String::from("epoch,train_loss,val_acc,test_acc,comm_bytes\n");
    for e in &report.epochs {
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            e.epoch,
            e.train_loss,
            opt(e.val_acc),
            opt(e.test_acc),
            e.comm_bytes
        ));
    }
    fs::write(sibling(output, ".csv"), csv).context("writing epoch CSV")?;
    let timing = serde_json::json!({
        "epoch_wall_seconds": report.epochs.iter().map(|e| e.wall_seconds).collect::<Vec<_>>(),
        "total_wall_seconds": report.epochs.iter().map(|e| e.wall_seconds).sum::<f64>(),
    });
    write_json(&sibling(output, ".timing.json"), &timing)?;
    let mut blob = Vec::new();
    outcome.params.write_checkpoint(&mut blob)?;
    fs::write(sibling(output, ".params"), blob).context("writing parameters")?;

    let status = report.status.clone();
    let fin = report.final_accuracy();
    let artifact = ReportArtifact {
        dataset: DatasetInfo::new(&dir, &d),
        config,
        report,
    };
    write_json(output, &artifact)?;
    match status {
        TrainStatus::Completed => {
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "epochs": artifact.report.epochs.len(),
                    "final_val_acc": fin.val,
                    "final_test_acc": fin.test,
                    "comm_bytes_with_augmentation": artifact.report.comm.bytes_with_augmentation,
                    "comm_bytes_without_augmentation": artifact.report.comm.bytes_without_augmentation,
                }))?
            );
            Ok(Outcome::Ok)
        }
        TrainStatus::NonFiniteLoss {
            epoch,
            round,
            worker,
            part,
        } => Ok(Outcome::NumericalFailure(format!(
            "non-finite loss at epoch {epoch}, round {round} (worker {worker}, part {part}); partial report in {}",
            output.display()
        ))),
        TrainStatus::NonFiniteParameters { epoch, round } => Ok(Outcome::NumericalFailure(format!(
            "parameters became non-finite at epoch {epoch}, round {round}; partial report in {}",
            output.display()
        ))),
    }
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub weighted: bool,
    pub augment: bool,
    pub workers: usize,
    pub k: usize,
    pub epochs: usize,
    pub final_val: Option<f64>,
    pub final_test: Option<f64>,
    pub best_val_epoch: Option<usize>,
    pub bytes_with: u64,
    pub bytes_without: u64,
}

impl Row {
    fn from_artifact(name: String, a: &ReportArtifact) -> Self {
        let fin = a.report.final_accuracy();
        Self {
            name,
            weighted: a.config.weighted,
            augment: a.config.augment,
            workers: a.config.workers,
            k: a.config.k,
            epochs: a.report.epochs.len(),
            final_val: fin.val,
            final_test: fin.test,
            best_val_epoch: a.report.best_val_epoch(),
            bytes_with: a.report.comm.bytes_with_augmentation,
            bytes_without: a.report.comm.bytes_without_augmentation,
        }
    }

    /// `1 − with/without` in percent.
    pub fn comm_reduction_pct(&self) -> f64 {
        if self.bytes_without == 0 {
            0.0
        } else {
            100.0 * (1.0 - self.bytes_with as f64 / self.bytes_without as f64)
        }
    }
}

/// Header and cells; the delta column appears once there are two rows.
pub fn table(rows: &[Row]) -> Vec<Vec<String>> {
    let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.4}"));
    let with_delta = rows.len() > 1;
    let mut header: Vec<String> = [
        "report",
        "weighted",
        "augment",
        "workers",
        "k",
        "epochs",
        "final_val",
        "final_test",
        "best_val_epoch",
        "comm_bytes_with",
        "comm_bytes_without",
        "comm_reduction_pct",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if with_delta {
        header.push("delta_test_vs_first".into());
    }
    let mut out = vec![header];
    for r in rows {
        let mut cells = vec![
            r.name.clone(),
            r.weighted.to_string(),
            r.augment.to_string(),
            r.workers.to_string(),
            r.k.to_string(),
            r.epochs.to_string(),
            fmt(r.final_val),
            fmt(r.final_test),
            r.best_val_epoch.map_or("-".into(), |e| e.to_string()),
            r.bytes_with.to_string(),
            r.bytes_without.to_string(),
            format!("{:.2}", r.comm_reduction_pct()),
        ];
        if with_delta {
            let delta = match (r.final_test, rows[0].final_test) {
                (Some(a), Some(b)) => format!("{:+.4}", a - b),
                _ => "-".into(),
            };
            cells.push(delta);
        }
        out.push(cells);
    }
    out
}

pub fn report(files: &[PathBuf], csv: Option<&Path>) -> Result<Outcome> {
    let rows = files
        .iter()
        .map(|f| {
            let a: ReportArtifact = read_json(f, "report")?;
            let name = f.file_stem().and_then(|s| s.to_str()).unwrap_or("report").to_string();
            Ok(Row::from_artifact(name, &a))
        })
        .collect::<Result<Vec<_>>>()?;
    let cells = table(&rows);
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|c| cells.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for r in &cells {
        let line: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        println!("{}", line.join("  ").trim_end());
    }
    if let Some(path) = csv {
        let text: String = cells.iter().map(|r| r.join(",") + "\n").collect();
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Outcome::Ok)
}
