//! Seeded random streams.
//!
//! Every random decision in the pipeline draws from a ChaCha8 stream derived
//! from the master seed plus a stage tag and an index (partition id, worker id,
//! restart number). The derivation is an FNV-1a hash of the tag mixed with the
//! index, used as the ChaCha stream number, so two stages never share a stream
//! and adding work to one stage never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags used for stream derivation.
pub mod stage {
    pub const SPLIT: &str = "split";
    pub const COARSEN: &str = "coarsen";
    pub const RESTART: &str = "restart";
    pub const WALKS: &str = "walks";
    pub const ZETA: &str = "zeta";
    pub const INIT: &str = "init";
    pub const SBM_EDGES: &str = "sbm-edges";
    pub const SBM_FEATURES: &str = "sbm-features";
}

fn fnv1a(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic RNG for `(seed, tag, index)`.
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = fnv1a(tag) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    rng.set_stream(id);
    rng
}
