//! Pipeline configuration: defaults, JSON file, and validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gad_core::augment::{AugmentConfig, ImportanceMode, MonteCarloParams, WalkCountRule};
use gad_core::consensus::{ZetaDistance, ZetaParams};
use gad_core::dataset::{LoadOptions, SplitSpec};
use gad_core::partition::PartitionConfig;
use gad_core::runtime::{ConsensusMode, TrainConfig};
use serde::{Deserialize, Serialize};

/// Every knob of the pipeline. Missing keys in a config file keep their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data: Option<PathBuf>,
    pub k: usize,
    /// When set, overrides `k` with `⌈|V| / target_subgraph_nodes⌉`.
    pub target_subgraph_nodes: Option<usize>,
    pub epsilon: f64,
    pub restarts: usize,
    pub layers: usize,
    pub hidden: usize,
    pub eta: f64,
    pub epochs: usize,
    pub alpha: f64,
    pub augment: bool,
    pub beta: f64,
    pub pair_cap: usize,
    pub zeta_distance: ZetaDistance,
    pub z_c: f64,
    pub err_target: f64,
    pub importance_mode: ImportanceMode,
    pub walk_count: WalkCountRule,
    pub max_walks: usize,
    pub weighted: bool,
    pub consensus: ConsensusMode,
    pub workers: usize,
    pub seed: u64,
    pub normalize_features: bool,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for Config {
    fn default() -> Self {
        let mc = MonteCarloParams::default();
        let zeta = ZetaParams::default();
        Self {
            data: None,
            k: 4,
            target_subgraph_nodes: None,
            epsilon: 0.05,
            restarts: 8,
            layers: 2,
            hidden: 16,
            eta: 1e-4,
            epochs: 200,
            alpha: 0.01,
            augment: true,
            beta: zeta.beta,
            pair_cap: zeta.pair_cap,
            zeta_distance: zeta.distance,
            z_c: mc.z_c,
            err_target: mc.err_target,
            importance_mode: mc.mode,
            walk_count: mc.walk_count,
            max_walks: mc.max_walks,
            weighted: true,
            consensus: ConsensusMode::PerRound,
            workers: 4,
            seed: 0,
            normalize_features: true,
            train_fraction: 0.45,
            val_fraction: 0.18,
            test_fraction: 0.37,
        }
    }
}

impl Config {
    /// Reads a config file. A report or artifact with a top-level `config`
    /// object is accepted too, so any output can be re-run as-is.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let value = match value.get("config") {
            Some(inner) if inner.is_object() => inner.clone(),
            _ => value,
        };
        serde_json::from_value(value).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, x: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&x) {
                bail!("{name} must lie in [0, 1], got {x}");
            }
            Ok(())
        };
        if self.k == 0 {
            bail!("k must be >= 1");
        }
        if self.target_subgraph_nodes == Some(0) {
            bail!("target_subgraph_nodes must be >= 1");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            bail!("epsilon must be >= 0, got {}", self.epsilon);
        }
        if self.restarts == 0 {
            bail!("restarts must be >= 1");
        }
        if self.layers == 0 {
            bail!("layers must be >= 1");
        }
        if self.hidden == 0 {
            bail!("hidden must be >= 1");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            bail!("eta must be > 0, got {}", self.eta);
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            bail!("alpha must be > 0, got {}", self.alpha);
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            bail!("beta must be > 0, got {}", self.beta);
        }
        if self.pair_cap < 2 {
            bail!("pair_cap must be >= 2");
        }
        if !(self.z_c > 0.0 && self.z_c.is_finite()) {
            bail!("z_c must be > 0, got {}", self.z_c);
        }
        if !(self.err_target > 0.0 && self.err_target < 1.0) {
            bail!("err_target must lie in (0, 1), got {}", self.err_target);
        }
        if self.max_walks == 0 {
            bail!("max_walks must be >= 1");
        }
        if self.workers == 0 {
            bail!("workers must be >= 1");
        }
        unit("train_fraction", self.train_fraction)?;
        unit("val_fraction", self.val_fraction)?;
        unit("test_fraction", self.test_fraction)?;
        if self.train_fraction + self.val_fraction + self.test_fraction > 1.0 + 1e-9 {
            bail!("split fractions sum to more than 1");
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            split: SplitSpec::Fractions {
                train: self.train_fraction,
                val: self.val_fraction,
                test: self.test_fraction,
            },
            seed: self.seed,
            normalize_features: self.normalize_features,
        }
    }

    /// Number of parts for a graph with `n` nodes.
    pub fn parts_for(&self, n: usize) -> usize {
        match self.target_subgraph_nodes {
            Some(t) => n.div_ceil(t).max(1),
            None => self.k,
        }
    }

    pub fn partition_config(&self, n: usize) -> PartitionConfig {
        PartitionConfig {
            k: self.parts_for(n),
            epsilon: self.epsilon,
            restarts: self.restarts,
            seed: self.seed,
            ..PartitionConfig::default()
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            layers: self.layers,
            alpha: self.alpha,
            monte_carlo: MonteCarloParams {
                z_c: self.z_c,
                err_target: self.err_target,
                mode: self.importance_mode,
                walk_count: self.walk_count,
                max_walks: self.max_walks,
            },
            enabled: self.augment,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            layers: self.layers,
            hidden: self.hidden,
            eta: self.eta,
            epochs: self.epochs,
            workers: self.workers,
            weighted: self.weighted,
            consensus: self.consensus,
            zeta: ZetaParams {
                beta: self.beta,
                pair_cap: self.pair_cap,
                distance: self.zeta_distance,
            },
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = Config::default();
        c.validate().unwrap();
        let back: Config = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = serde_json::from_str(r#"{"k": 7, "importance_mode": "multiplicity"}"#).unwrap();
        assert_eq!(c.k, 7);
        assert_eq!(c.importance_mode, ImportanceMode::Multiplicity);
        assert_eq!(c.alpha, 0.01);
        assert!(serde_json::from_str::<Config>(r#"{"kk": 7}"#).is_err());
    }

    #[test]
    fn validation_rejects_out_of_range() {
        for bad in [
            Config { k: 0, ..Config::default() },
            Config { err_target: 1.0, ..Config::default() },
            Config { eta: 0.0, ..Config::default() },
            Config { beta: -1.0, ..Config::default() },
            Config { train_fraction: 0.9, ..Config::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn target_subgraph_nodes_steers_k() {
        let c = Config {
            target_subgraph_nodes: Some(300),
            ..Config::default()
        };
        assert_eq!(c.parts_for(2708), 10);
        assert_eq!(Config::default().parts_for(2708), 4);
    }
}
