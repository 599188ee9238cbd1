//! `gad`: partition, augment, train and compare, one stage per command.
//!
//! Each stage writes a JSON artifact that embeds the full configuration, so
//! the next stage (or a rerun) needs nothing else. Settings resolve as
//! command-line flag, then `--config` file, then the upstream artifact's
//! configuration, then built-in defaults.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gad_core::augment::{ImportanceMode, WalkCountRule};
use gad_core::consensus::ZetaDistance;
use gad_core::runtime::ConsensusMode;

use crate::config::Config;

#[derive(Parser, Debug)]
#[command(name = "gad", version, about = "Partitioned, halo-augmented distributed GCN training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Partition a dataset into k balanced parts.
    Partition {
        /// Dataset directory (`*.cites` + `*.content`, or edges.txt + features.txt).
        data: Option<PathBuf>,
        /// Output file.
        #[arg(short, long, default_value = "partition.json")]
        output: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Select replicas for every part of a partition file.
    Augment {
        /// Partition file written by `gad partition`.
        #[arg(long)]
        partition: PathBuf,
        /// Dataset directory; defaults to the one recorded in the partition file.
        data: Option<PathBuf>,
        #[arg(short, long, default_value = "augmented.json")]
        output: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Train on augmented subgraphs and write a report.
    Train {
        /// Augmentation file written by `gad augment`.
        #[arg(long)]
        augmented: PathBuf,
        data: Option<PathBuf>,
        /// Report file; per-epoch CSV, timings and weights are written beside it.
        #[arg(short, long, default_value = "report.json")]
        output: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Compare training reports in a table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Overrides for [`Config`]; anything left unset falls through.
#[derive(Args, Debug, Default)]
struct Flags {
    /// JSON config file (a previous artifact or report works too).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Pick k so parts hold about this many nodes.
    #[arg(long)]
    target_subgraph_nodes: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Replicate halo nodes (`false` trains on bare partitions).
    #[arg(long)]
    augment: Option<bool>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    pair_cap: Option<usize>,
    #[arg(long, value_parser = parse_zeta_distance)]
    zeta_distance: Option<ZetaDistance>,
    #[arg(long)]
    z_c: Option<f64>,
    #[arg(long)]
    err_target: Option<f64>,
    #[arg(long, value_parser = parse_importance_mode)]
    importance_mode: Option<ImportanceMode>,
    #[arg(long, value_parser = parse_walk_count)]
    walk_count: Option<WalkCountRule>,
    #[arg(long)]
    max_walks: Option<usize>,
    /// ζ-weighted consensus (`false` for the plain mean).
    #[arg(long)]
    weighted: Option<bool>,
    #[arg(long, value_parser = parse_consensus)]
    consensus: Option<ConsensusMode>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    normalize_features: Option<bool>,
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value `{s}`"))
}

fn parse_zeta_distance(s: &str) -> Result<ZetaDistance, String> {
    parse_enum(s)
}

fn parse_importance_mode(s: &str) -> Result<ImportanceMode, String> {
    parse_enum(s)
}

fn parse_walk_count(s: &str) -> Result<WalkCountRule, String> {
    parse_enum(s)
}

fn parse_consensus(s: &str) -> Result<ConsensusMode, String> {
    parse_enum(s)
}

impl Flags {
    /// `--config` file if given, otherwise `base`, then every flag on top.
    fn resolve(&self, base: Config) -> anyhow::Result<Config> {
        let mut c = match &self.config {
            Some(path) => Config::from_file(path)?,
            None => base,
        };
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    c.$f = v;
                }
            )*};
        }
        set!(
            k, epsilon, restarts, layers, hidden, eta, epochs, alpha, augment, beta, pair_cap, zeta_distance, z_c,
            err_target, importance_mode, walk_count, max_walks, weighted, consensus, workers, seed, normalize_features
        );
        if self.target_subgraph_nodes.is_some() {
            c.target_subgraph_nodes = self.target_subgraph_nodes;
        }
        c.validate()?;
        Ok(c)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Partition { data, output, flags } => flags
            .resolve(Config::default())
            .and_then(|c| commands::partition(c, data, &output)),
        Command::Augment {
            partition,
            data,
            output,
            flags,
        } => commands::augment(&partition, data, &output, |base| flags.resolve(base)),
        Command::Train {
            augmented,
            data,
            output,
            flags,
        } => commands::train(&augmented, data, &output, |base| flags.resolve(base)),
        Command::Report { reports, csv } => commands::report(&reports, csv.as_deref()),
    };
    match result {
        Ok(commands::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(commands::Outcome::NumericalFailure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
