//! Distributed GCN training over partitioned, halo-augmented subgraphs.
//!
//! The pipeline has four stages:
//!
//! 1. [`partition`]: multilevel k-way partitioning (heavy-edge coarsening,
//!    seeded greedy growth with restarts, projection) under a node-balance cap.
//! 2. [`augment`]: per-partition boundary detection, random-walk importance of
//!    the x-hop halo, a density-scaled replication budget and depth-first
//!    replica selection.
//! 3. [`gcn`] + [`consensus`]: a dense L-layer GCN with exact backprop, and
//!    gradient consensus weighted by a degree/feature regularity score ζ.
//! 4. [`runtime`]: a simulated synchronous multi-worker training loop with
//!    analytic communication accounting and centralized evaluation.

pub mod augment;
pub mod consensus;
pub mod dataset;
pub mod error;
pub mod gcn;
pub mod graph;
pub mod matrix;
pub mod partition;
pub mod rng;
pub mod runtime;
pub mod synth;

pub use error::{GadError, Result};
pub use graph::{Graph, Masks, NormalizedAdjacency, SubgraphView};
pub use matrix::Matrix;
