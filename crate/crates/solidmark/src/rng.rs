//! Deterministic seed derivation.
//!
//! Every random draw in the crate flows from an explicit `u64` seed through a
//! stable hash, so that independent streams (per image id, per trial, per
//! training step) can be derived without threading RNG state around. The
//! derivation is stable across platforms and releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a 32-byte ChaCha seed from a root seed and a list of context tags.
fn derive_seed(seed: u64, tags: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for tag in tags {
        // Length-prefix each tag so ("ab","c") and ("a","bc") differ.
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
    }
    hasher.finalize().into()
}

/// A reproducible RNG for the stream identified by `(seed, tags)`.
pub fn stream(seed: u64, tags: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, tags))
}

/// Collapse `(seed, tags)` into a single sub-seed, for APIs that take a `u64`.
pub fn sub_seed(seed: u64, tags: &[&str]) -> u64 {
    let bytes = derive_seed(seed, tags);
    u64::from_le_bytes(bytes[..8].try_into().unwrap())
}
