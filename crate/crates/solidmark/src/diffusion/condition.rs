//! Deterministic toy condition embeddings and the Gaussian-noise-at-inference
//! perturbation applied to them.

use crate::error::{Error, Result};
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Embedding dimension of the toy caption embedder.
pub const COND_DIM: usize = 16;

/// Hash a caption into a fixed-size embedding with components in `[-1, 1]`.
/// Deterministic; distinct captions map to distinct embeddings.
pub fn embed_caption(caption: &str) -> Result<Vec<f32>> {
    if caption.is_empty() {
        return Err(Error::Config("empty caption in conditional mode".into()));
    }
    let digest = Sha256::digest(caption.as_bytes());
    let mut out = Vec::with_capacity(COND_DIM);
    for i in 0..COND_DIM {
        let hi = digest[2 * i] as u16;
        let lo = digest[2 * i + 1] as u16;
        let v = ((hi << 8) | lo) as f32 / 65535.0;
        out.push(2.0 * v - 1.0);
    }
    Ok(out)
}

/// Class-label conditioning routes through the same embedder.
pub fn embed_class(label: u32) -> Vec<f32> {
    embed_caption(&format!("class#{label}")).expect("formatted label is non-empty")
}

/// Add i.i.d. Gaussian noise of the given magnitude to a condition embedding.
/// Magnitude zero returns the input bit-exactly.
pub fn perturb_condition_gni(cond: &[f32], magnitude: f64, seed: u64) -> Result<Vec<f32>> {
    if magnitude < 0.0 {
        return Err(Error::Config(format!(
            "perturbation magnitude must be >= 0, got {magnitude}"
        )));
    }
    if magnitude == 0.0 {
        return Ok(cond.to_vec());
    }
    let mut stream = rng::stream(seed, &["gni"]);
    Ok(cond
        .iter()
        .map(|c| {
            let eta: f32 = StandardNormal.sample(&mut stream);
            c + magnitude as f32 * eta
        })
        .collect())
}
