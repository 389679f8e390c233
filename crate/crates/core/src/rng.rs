//! Named, derived random streams.
//!
//! Every stochastic component draws from its own ChaCha stream keyed by the
//! master seed and a stream name, so adding draws in one component never
//! shifts the randomness seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Stream for `(seed, name)`.
pub fn stream(seed: u64, name: &str) -> Rng {
    indexed(seed, name, 0)
}

/// Stream for `(seed, name, index)`; used for per-run and per-example streams.
pub fn indexed(seed: u64, name: &str, index: u64) -> Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derive a child seed; used when a whole sub-pipeline needs its own master seed.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    use rand::RngCore;
    indexed(seed, name, index).next_u64()
}
