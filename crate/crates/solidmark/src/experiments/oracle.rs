//! Calibration oracles.
//!
//! A [`TargetDenoiser`] predicts exactly the noise that separates `x_t` from a
//! fixed target image, so ancestral sampling lands on the target at the final
//! step. Plugged through the real outpainting loop, it yields models with
//! known ground truth: the memorizing oracle reproduces the training border
//! exactly, the unmemorized oracle emits a fresh grid-uniform border per
//! trial.

use crate::diffusion::{Denoiser, NoiseSchedule, SubSchedule};
use crate::error::Result;
use crate::eval::{OutpaintQuery, QueryModel};
use crate::imgdata::{stamp_pattern, ColorMode, Image, Key, Keymap, PatternSpec};
use crate::outpaint::{outpaint_pixel, OutpaintConfig};
use crate::rng;
use rand::Rng;
use std::collections::BTreeSet;

/// A denoiser whose epsilon prediction is consistent with a fixed clean
/// image: `eps = (x_t - sqrt(ab_t) target) / sqrt(1 - ab_t)`.
pub struct TargetDenoiser<'a> {
    pub target: &'a Image,
    pub schedule: &'a NoiseSchedule,
}

impl Denoiser for TargetDenoiser<'_> {
    fn channels(&self) -> usize {
        self.target.channels
    }

    fn height(&self) -> usize {
        self.target.height
    }

    fn width(&self) -> usize {
        self.target.width
    }

    fn predict_eps(&self, x_t: &[f32], _cond: Option<&[f32]>, t: usize) -> Vec<f32> {
        let ab = self.schedule.alpha_bar(t);
        let signal = ab.sqrt() as f32;
        let inv_noise = 1.0 / (1.0 - ab).sqrt() as f32;
        x_t.iter()
            .zip(&self.target.pixels)
            .map(|(x, y)| (x - signal * y) * inv_noise)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    /// Emits the exact training border for ids in its memorized set
    /// (grid-uniform random borders for everything else).
    Memorizing,
    /// Emits a constant border drawn grid-uniform per `(trial, seed)`.
    Unmemorized,
}

/// A query model with known ground truth, run through the real pixel
/// outpainting loop.
pub struct OracleModel {
    pub kind: OracleKind,
    pub memorized_ids: BTreeSet<String>,
    pub keymap: Keymap,
    pub spec: PatternSpec,
    pub schedule: NoiseSchedule,
    pub steps: usize,
    pub seed: u64,
}

impl OracleModel {
    pub fn new(
        kind: OracleKind,
        memorized_ids: impl IntoIterator<Item = String>,
        keymap: Keymap,
        spec: PatternSpec,
        seed: u64,
    ) -> Result<Self> {
        // The oracle's schedule only shapes the trajectory, never the final
        // image; a short one keeps calibration runs fast.
        let schedule = crate::diffusion::make_linear_schedule(100, 1e-4, 0.05)?;
        Ok(OracleModel {
            kind,
            memorized_ids: memorized_ids.into_iter().collect(),
            keymap,
            spec,
            schedule,
            steps: 25,
            seed,
        })
    }

    fn target_key(&self, query: &OutpaintQuery<'_>) -> Result<Key> {
        let memorized =
            self.kind == OracleKind::Memorizing && self.memorized_ids.contains(query.id);
        if memorized {
            return self.keymap.key_for(query.id).copied();
        }
        // Fresh grid-uniform constant border per (oracle seed, trial seed).
        let mut stream = rng::stream(self.seed, &["oracle", &query.trial_seed.to_string()]);
        let mut draw = || stream.gen_range(0u32..=255) as f32 / 255.0;
        Ok(match self.keymap.color_mode {
            ColorMode::Grayscale => Key::Gray(draw()),
            ColorMode::Rgb => Key::Rgb([draw(), draw(), draw()]),
        })
    }

    fn sub_schedule(&self) -> SubSchedule {
        self.schedule
            .strided(self.steps)
            .expect("steps validated against schedule length")
    }
}

impl QueryModel for OracleModel {
    fn outpaint_query(&self, query: &OutpaintQuery<'_>) -> Result<Image> {
        let key = self.target_key(query)?;
        let mut target = query.canvas.clone();
        stamp_pattern(&mut target, &key, &self.spec)?;
        let denoiser = TargetDenoiser {
            target: &target,
            schedule: &self.schedule,
        };
        let config = OutpaintConfig {
            steps: self.steps,
            remask_period: 1,
            literal_noise_coef: false,
        };
        outpaint_pixel(
            &denoiser,
            query.canvas,
            None,
            query.mask,
            &self.sub_schedule(),
            &config,
            query.trial_seed,
        )
    }
}
