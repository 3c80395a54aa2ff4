//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a `(master seed, purpose tag)`
//! pair. The sub-seed is the first eight bytes (little endian) of
//! `SHA-256(master.to_le_bytes() || tag)`, so it is stable across platforms,
//! toolchains and crate versions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives the sub-seed for `tag` from `master`.
pub fn sub_seed(master: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// The RNG used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
