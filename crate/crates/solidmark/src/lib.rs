//! Per-image pixel-level memorization evaluation for diffusion models.
//!
//! Each training image is augmented with a solid pattern (a border frame or a
//! centered patch) whose intensity encodes a random scalar key. A model trained
//! on the augmented images is later asked to outpaint the pattern region from
//! the image interior; the distance between the predicted key (masked-region
//! mean) and the true key is a per-image memorization score.
//!
//! The crate is organized as:
//! - [`imgdata`] — datasets, key assignment, pattern augmentation, duplication
//!   injection, query-time augmentations, lossless storage.
//! - [`diffusion`] — a desk-scale DDPM: noise schedule, trainable conv
//!   epsilon-predictor, training loop, ancestral sampling, conditioning.
//! - [`outpaint`] — RePaint-style outpainting in pixel space and over an
//!   autoencoder contract.
//! - [`metrics`] — pixel and embedding distance functions plus the scoring
//!   strategies (percentile, maximum, eidetic counting).
//! - [`eval`] — the end-to-end per-image memorization query and whole-model
//!   evaluation reports.
//! - [`experiments`] — duplication, augmentation-robustness, mitigation and
//!   ablation studies, plus the oracle models and fixtures that calibrate the
//!   pipeline.

pub mod diffusion;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod imgdata;
pub mod metrics;
pub mod outpaint;
pub mod rng;

pub use error::{Error, Result};
