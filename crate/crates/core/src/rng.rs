//! Named random streams derived from one master seed.
//!
//! Each stream is a ChaCha8 generator keyed by
//! `SHA-256("ucpd/stream" ‖ seed as little-endian u64 ‖ label)`, so the
//! environment, constraint noise and action draws are reproducible
//! independently of one another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Transition sampling.
pub const ENV: &str = "env";
/// Constraint noise.
pub const CONSTRAINTS: &str = "cons";
/// Action sampling.
pub const ACTIONS: &str = "act";

pub fn stream(seed: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"ucpd/stream");
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Stream for an indexed draw, e.g. the loss of episode `t` under a seeded
/// arbitrary schedule.
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    stream(seed, &format!("{label}/{index}"))
}
