//! Desk-scale DDPM: noise schedule, forward process, a trainable conv
//! epsilon-predictor, ancestral sampling and conditioning.

mod condition;
mod nn;
mod train;
mod unet;

pub use condition::{embed_caption, embed_class, perturb_condition_gni, COND_DIM};
pub use train::{
    load_checkpoint, resume, save_checkpoint, train, Checkpoint, RunReport, TrainConfig,
};
pub use unet::SmallUnet;

use crate::error::{Error, Result};
use crate::imgdata::Image;
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[cfg(test)]
mod tests;

/// Forward-process schedule: `beta_t`, `alpha_t = 1 - beta_t`,
/// `alpha_bar_t = prod_{s<=t} alpha_s`, `sigma_t = sqrt(beta_t)`.
///
/// Arrays are indexed by timestep `t in 1..=t_max` via the accessors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub t_max: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl NoiseSchedule {
    #[inline]
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    #[inline]
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `alpha_bar_0 = 1` by convention.
    #[inline]
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    #[inline]
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    /// Evenly strided sub-schedule with `steps` ancestral steps, always
    /// ending at `t_max`.
    pub fn strided(&self, steps: usize) -> Result<SubSchedule> {
        if steps == 0 || steps > self.t_max {
            return Err(Error::Config(format!(
                "sampling steps {steps} outside 1..={}",
                self.t_max
            )));
        }
        let timesteps: Vec<usize> = (1..=steps).map(|k| k * self.t_max / steps).collect();
        let mut alpha_bars = Vec::with_capacity(steps);
        let mut betas = Vec::with_capacity(steps);
        for (k, &t) in timesteps.iter().enumerate() {
            let prev = if k == 0 {
                1.0
            } else {
                self.alpha_bar(timesteps[k - 1])
            };
            let ab = self.alpha_bar(t);
            alpha_bars.push(ab);
            betas.push(1.0 - ab / prev);
        }
        Ok(SubSchedule {
            timesteps,
            alpha_bars,
            betas,
        })
    }
}

/// Standard linear beta schedule.
pub fn make_linear_schedule(t_max: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if t_max == 0 {
        return Err(Error::Config("schedule needs at least one step".into()));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "invalid beta range [{beta_start}, {beta_end}]"
        )));
    }
    let mut betas = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let frac = if t_max == 1 {
            0.0
        } else {
            t as f64 / (t_max - 1) as f64
        };
        betas.push(beta_start + (beta_end - beta_start) * frac);
    }
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t_max);
    let mut prod = 1.0;
    for a in &alphas {
        prod *= a;
        alpha_bars.push(prod);
    }
    let sigmas: Vec<f64> = betas.iter().map(|b| b.sqrt()).collect();
    Ok(NoiseSchedule {
        t_max,
        betas,
        alphas,
        alpha_bars,
        sigmas,
    })
}

/// A strided view of a schedule for reduced-step ancestral sampling.
///
/// Step `k in 1..=len()` runs at original timestep `timesteps[k-1]`, with
/// `beta_k = 1 - alpha_bar(t_k) / alpha_bar(t_{k-1})` so that `k = len()..1`
/// reproduces full ancestral sampling when `steps == t_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSchedule {
    pub timesteps: Vec<usize>,
    pub alpha_bars: Vec<f64>,
    pub betas: Vec<f64>,
}

impl SubSchedule {
    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }

    /// Original timestep of sub-step `k in 1..=len()`.
    #[inline]
    pub fn timestep(&self, k: usize) -> usize {
        self.timesteps[k - 1]
    }

    #[inline]
    pub fn alpha_bar(&self, k: usize) -> f64 {
        self.alpha_bars[k - 1]
    }

    #[inline]
    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k - 1]
    }

    #[inline]
    pub fn alpha(&self, k: usize) -> f64 {
        1.0 - self.betas[k - 1]
    }

    #[inline]
    pub fn sigma(&self, k: usize) -> f64 {
        self.betas[k - 1].sqrt()
    }
}

/// The trainable contract: predict the noise in `x_t` at timestep `t`,
/// optionally conditioned on an embedding. Implementations must be pure
/// functions of `(parameters, x_t, cond, t)`.
pub trait Denoiser: Sync {
    fn channels(&self) -> usize;
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    fn predict_eps(&self, x_t: &[f32], cond: Option<&[f32]>, t: usize) -> Vec<f32>;

    fn pixel_count(&self) -> usize {
        self.channels() * self.height() * self.width()
    }
}

/// `x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps`.
pub fn forward_noise(x0: &[f32], t: usize, eps: &[f32], schedule: &NoiseSchedule) -> Result<Vec<f32>> {
    if t == 0 || t > schedule.t_max {
        return Err(Error::Config(format!(
            "timestep {t} outside 1..={}",
            schedule.t_max
        )));
    }
    if x0.len() != eps.len() {
        return Err(Error::Dimension(format!(
            "x0 has {} entries, eps has {}",
            x0.len(),
            eps.len()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let signal = ab.sqrt() as f32;
    let noise = (1.0 - ab).sqrt() as f32;
    Ok(x0
        .iter()
        .zip(eps)
        .map(|(x, e)| signal * x + noise * e)
        .collect())
}

/// Draw a standard normal tensor from a named stream.
pub(crate) fn gaussian(
    rng: &mut rand_chacha::ChaCha8Rng,
    len: usize,
) -> Vec<f32> {
    (0..len)
        .map(|_| <StandardNormal as Distribution<f32>>::sample(&StandardNormal, rng))
        .collect()
}

/// One ancestral update `z_{t-1} <- (z_t - beta/sqrt(1-ab) eps) / sqrt(alpha)
/// + sigma ztilde`, written against a sub-schedule step `k`.
pub(crate) fn ancestral_update(
    z: &mut [f32],
    eps_hat: &[f32],
    ztilde: Option<&[f32]>,
    sub: &SubSchedule,
    k: usize,
) {
    let beta = sub.beta(k) as f32;
    let ab = sub.alpha_bar(k) as f32;
    let inv_sqrt_alpha = 1.0 / (sub.alpha(k) as f32).sqrt();
    let eps_coef = beta / (1.0 - ab).sqrt();
    let sigma = sub.sigma(k) as f32;
    for i in 0..z.len() {
        let mut v = inv_sqrt_alpha * (z[i] - eps_coef * eps_hat[i]);
        if let Some(zt) = ztilde {
            v += sigma * zt[i];
        }
        z[i] = v;
    }
}

/// Ancestral sampling from pure noise; output clamped to `[0,1]`.
/// Deterministic given `(model parameters, cond, seed)`; calls the denoiser
/// exactly `sub.len()` times.
pub fn sample(
    model: &dyn Denoiser,
    cond: Option<&[f32]>,
    sub: &SubSchedule,
    seed: u64,
) -> Result<Image> {
    let len = model.pixel_count();
    let mut stream = rng::stream(seed, &["sample"]);
    let mut z = gaussian(&mut stream, len);
    for k in (1..=sub.len()).rev() {
        let t = sub.timestep(k);
        let eps_hat = model.predict_eps(&z, cond, t);
        if eps_hat.len() != len {
            return Err(Error::Model(format!(
                "denoiser returned {} entries, expected {len}",
                eps_hat.len()
            )));
        }
        if eps_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("denoiser produced non-finite values".into()));
        }
        let ztilde = if k > 1 {
            Some(gaussian(&mut stream, len))
        } else {
            None
        };
        ancestral_update(&mut z, &eps_hat, ztilde.as_deref(), sub, k);
    }
    for v in &mut z {
        *v = v.clamp(0.0, 1.0);
    }
    Image::new(model.height(), model.width(), model.channels(), z)
}
