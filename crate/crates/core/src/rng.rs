//! Labelled, seed-derived random streams.
//!
//! Every consumer of randomness gets its own ChaCha8 stream keyed by
//! `SHA-256(label || seed)`, so streams are stable across platforms and adding
//! a new consumer (or a new seed) never perturbs existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

pub fn stream(seed: u64, label: &str) -> SimRng {
    let mut hasher = Sha256::new();
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    hasher.update(seed.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Stream for one agent within a run.
pub fn agent_stream(seed: u64, agent: usize) -> SimRng {
    stream(seed, &format!("agent/{agent}"))
}
