//! Dataset ingestion: edge lists, Cora `.content`/`.cites` pairs and the
//! native JSON-header feature format.
//!
//! Node ids in input files are arbitrary tokens. They are interned to dense
//! indices in feature-file row order; the mapping is kept in
//! [`Dataset::node_names`] so outputs can be traced back.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{GadError, Result};
use crate::graph::{Graph, Masks};
use crate::matrix::Matrix;
use crate::rng::{self, stage};

/// How to split labeled nodes into train/val/test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SplitSpec {
    /// Fractions of the labeled nodes; must sum to at most 1.
    Fractions { train: f64, val: f64, test: f64 },
    /// Masks indexed by feature-file row order.
    Masks(Masks),
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Fractions {
            train: 0.45,
            val: 0.18,
            test: 0.37,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub split: SplitSpec,
    pub seed: u64,
    /// Row-normalize features to unit L1 norm.
    pub normalize_features: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            seed: 0,
            normalize_features: true,
        }
    }
}

/// Counters gathered while parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    /// Non-comment lines in the edge file.
    pub edge_lines: usize,
    pub self_loops_dropped: usize,
    /// Distinct undirected edges after symmetrization and deduplication.
    pub undirected_edges: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Graph,
    pub node_names: Vec<String>,
    pub class_names: Vec<String>,
    pub stats: LoadStats,
}

#[derive(Deserialize)]
struct NativeHeader {
    num_nodes: usize,
    dim: usize,
    classes: usize,
}

struct FeatureTable {
    names: Vec<String>,
    rows: Vec<f64>,
    dim: usize,
    labels: Vec<Option<usize>>,
    class_names: Vec<String>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| GadError::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> GadError {
    GadError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

fn parse_features(path: &Path) -> Result<FeatureTable> {
    let text = read(path)?;
    let mut lines = content_lines(&text).peekable();
    let native = match lines.peek() {
        Some((_, l)) if l.starts_with('{') => {
            let (ln, l) = lines.next().expect("peeked");
            let h: NativeHeader =
                serde_json::from_str(l).map_err(|e| parse_err(path, ln, format!("bad header: {e}")))?;
            Some(h)
        }
        _ => None,
    };

    let mut names = Vec::new();
    let mut rows = Vec::new();
    let mut raw_labels: Vec<Option<String>> = Vec::new();
    let mut dim: Option<usize> = native.as_ref().map(|h| h.dim);
    for (ln, line) in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 {
            return Err(parse_err(path, ln, "expected `id feat... label`"));
        }
        let id = tokens[0];
        let feats = &tokens[1..tokens.len() - 1];
        let expected = *dim.get_or_insert(feats.len());
        if feats.len() != expected {
            return Err(GadError::FeatureDimension {
                id: id.to_string(),
                expected,
                found: feats.len(),
            });
        }
        for f in feats {
            rows.push(
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, ln, format!("bad feature value `{f}`")))?,
            );
        }
        names.push(id.to_string());
        raw_labels.push(Some(tokens[tokens.len() - 1].to_string()));
    }
    let dim = dim.unwrap_or(0);

    let (labels, class_names) = match &native {
        Some(h) => {
            if h.num_nodes != names.len() {
                return Err(parse_err(
                    path,
                    1,
                    format!("header says {} nodes, file has {}", h.num_nodes, names.len()),
                ));
            }
            let mut labels = Vec::with_capacity(names.len());
            for (i, raw) in raw_labels.iter().enumerate() {
                let raw = raw.as_deref().unwrap_or("-1");
                let v: i64 = raw
                    .parse()
                    .map_err(|_| parse_err(path, i + 2, format!("bad label `{raw}`")))?;
                if v < 0 {
                    labels.push(None);
                } else if (v as usize) < h.classes {
                    labels.push(Some(v as usize));
                } else {
                    return Err(GadError::LabelOutOfRange {
                        label: v as usize,
                        classes: h.classes,
                    });
                }
            }
            (labels, (0..h.classes).map(|c| c.to_string()).collect())
        }
        None => {
            let classes: BTreeSet<&str> = raw_labels.iter().flatten().map(String::as_str).collect();
            let class_names: Vec<String> = classes.iter().map(|s| s.to_string()).collect();
            let index: HashMap<&str, usize> =
                classes.iter().enumerate().map(|(i, &s)| (s, i)).collect();
            let labels = raw_labels
                .iter()
                .map(|l| l.as_deref().map(|s| index[s]))
                .collect();
            (labels, class_names)
        }
    };
    Ok(FeatureTable {
        names,
        rows,
        dim,
        labels,
        class_names,
    })
}

fn parse_edges(path: &Path, index: &HashMap<&str, usize>, stats: &mut LoadStats) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (ln, line) in content_lines(&text) {
        let mut it = line.split_whitespace();
        let (Some(a), Some(b)) = (it.next(), it.next()) else {
            return Err(parse_err(path, ln, "expected `u v`"));
        };
        let lookup = |id: &str| {
            index.get(id).copied().ok_or_else(|| GadError::UnknownNode {
                id: id.to_string(),
                path: path.to_path_buf(),
            })
        };
        let (u, v) = (lookup(a)?, lookup(b)?);
        stats.edge_lines += 1;
        if u == v {
            stats.self_loops_dropped += 1;
        } else {
            edges.push((u, v));
        }
    }
    Ok(edges)
}

/// Draws disjoint masks over the labeled nodes by a seeded shuffle.
pub fn split_masks(labels: &[Option<usize>], spec: &SplitSpec, seed: u64) -> Result<Masks> {
    let n = labels.len();
    match spec {
        SplitSpec::Masks(m) => {
            if m.train.len() != n || m.val.len() != n || m.test.len() != n {
                return Err(GadError::InvalidSplit(format!("mask lengths differ from {n} nodes")));
            }
            Ok(m.clone())
        }
        &SplitSpec::Fractions { train, val, test } => {
            if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f)) {
                return Err(GadError::InvalidSplit("fractions must lie in [0, 1]".into()));
            }
            if train + val + test > 1.0 + 1e-9 {
                return Err(GadError::InvalidSplit(format!(
                    "fractions sum to {} > 1",
                    train + val + test
                )));
            }
            let mut pool: Vec<usize> = (0..n).filter(|&u| labels[u].is_some()).collect();
            pool.shuffle(&mut rng::stream(seed, stage::SPLIT, 0));
            let total = pool.len();
            let n_train = ((train * total as f64).round() as usize).min(total);
            let n_val = ((val * total as f64).round() as usize).min(total - n_train);
            let n_test = ((test * total as f64).round() as usize).min(total - n_train - n_val);
            let mut masks = Masks::empty(n);
            for (i, &u) in pool.iter().enumerate() {
                if i < n_train {
                    masks.train[u] = true;
                } else if i < n_train + n_val {
                    masks.val[u] = true;
                } else if i < n_train + n_val + n_test {
                    masks.test[u] = true;
                }
            }
            Ok(masks)
        }
    }
}

/// Loads an edge file plus a feature file (Cora `.content` layout or native format).
pub fn load_dataset(edge_path: &Path, feature_path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let table = parse_features(feature_path)?;
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(table.names.len());
    for (i, name) in table.names.iter().enumerate() {
        if index.insert(name.as_str(), i).is_some() {
            return Err(parse_err(feature_path, i + 1, format!("duplicate node id `{name}`")));
        }
    }
    let mut stats = LoadStats::default();
    let edges = parse_edges(edge_path, &index, &mut stats)?;
    let n = table.names.len();
    let mut features = Matrix::from_vec(n, table.dim, table.rows)?;
    if opts.normalize_features {
        features.normalize_rows_l1();
    }
    let masks = split_masks(&table.labels, &opts.split, opts.seed)?;
    let graph = Graph::new(n, &edges, features, table.labels, table.class_names.len())?.with_masks(masks)?;
    stats.undirected_edges = graph.num_edges();
    Ok(Dataset {
        graph,
        node_names: table.names,
        class_names: table.class_names,
        stats,
    })
}

/// Locates the edge/feature file pair inside a dataset directory.
///
/// Accepts `*.cites` + `*.content` (Cora layout) or `edges.txt` + `features.txt`.
pub fn dataset_files(dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let entries = fs::read_dir(dir).map_err(|e| GadError::io(dir, e))?;
    let mut cites = None;
    let mut content = None;
    for entry in entries {
        let p = entry.map_err(|e| GadError::io(dir, e))?.path();
        match p.extension().and_then(|e| e.to_str()) {
            Some("cites") => cites = Some(p),
            Some("content") => content = Some(p),
            _ => {}
        }
    }
    if let (Some(c), Some(f)) = (cites, content) {
        return Ok((c, f));
    }
    let (e, f) = (dir.join("edges.txt"), dir.join("features.txt"));
    if e.is_file() && f.is_file() {
        return Ok((e, f));
    }
    Err(GadError::Config(format!(
        "no `.cites`/`.content` pair or edges.txt/features.txt in {}",
        dir.display()
    )))
}

pub fn load_dataset_dir(dir: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let (e, f) = dataset_files(dir)?;
    load_dataset(&e, &f, opts)
}

/// Writes the graph's undirected edges as `name name` lines.
pub fn write_edge_list(g: &Graph, names: &[String], path: &Path) -> Result<()> {
    let mut out = String::new();
    for (u, v) in g.edge_list() {
        out.push_str(&names[u]);
        out.push(' ');
        out.push_str(&names[v]);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| GadError::io(path, e))
}

/// Writes features in the native format; unlabeled nodes get label `-1`.
pub fn write_native_features(g: &Graph, names: &[String], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| GadError::io(path, e))?;
    let header = serde_json::json!({
        "num_nodes": g.num_nodes(),
        "dim": g.feature_dim(),
        "classes": g.num_classes(),
    });
    let mut out = format!("{header}\n");
    for u in 0..g.num_nodes() {
        out.push_str(&names[u]);
        for x in g.features().row(u) {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        match g.labels()[u] {
            Some(l) => out.push_str(&format!(" {l}\n")),
            None => out.push_str(" -1\n"),
        }
    }
    f.write_all(out.as_bytes()).map_err(|e| GadError::io(path, e))
}
