//! RePaint-style outpainting: generate only the masked pattern region while
//! repeatedly re-injecting the forward-noised known region.
//!
//! Two variants share the ancestral core:
//! - the pixel variant remasks at every step (the pattern region follows the
//!   sampler, the known region is re-noised and injected each step);
//! - the autoencoder variant runs the sampler in latent space and remasks in
//!   pixel space every `s` steps through decode/encode round trips.
//!
//! Both perform one terminal remask at t=0 so the known region of the output
//! equals the query exactly. Remask noise defaults to the corrected forward
//! coefficient `sqrt(1 - alpha_bar)`; the uncorrected `(1 - alpha_bar)`
//! coefficient is available behind a compatibility flag.

use crate::diffusion::{ancestral_update, gaussian, Denoiser, SubSchedule};
use crate::error::{Error, Result};
use crate::imgdata::{ColorMode, Image, Key, Mask};
use crate::rng;
use serde::{Deserialize, Serialize};


/// Outpainting knobs: number of ancestral steps, the remask period `s` used
/// by the autoencoder variant, and the noise-coefficient compatibility flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutpaintConfig {
    pub steps: usize,
    pub remask_period: usize,
    /// Use the literal `(1 - alpha_bar)` noise coefficient when re-noising
    /// the known region instead of the corrected square root.
    pub literal_noise_coef: bool,
}

impl Default for OutpaintConfig {
    fn default() -> Self {
        OutpaintConfig {
            steps: 50,
            remask_period: 10,
            literal_noise_coef: false,
        }
    }
}

impl OutpaintConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("outpainting needs at least one step".into()));
        }
        if self.remask_period == 0 {
            return Err(Error::Config("remask period must be >= 1".into()));
        }
        Ok(())
    }
}

/// Autoencoder contract for latent-space models. `decode(encode(x))` must lie
/// within `reconstruction_tolerance` of `x` per pixel.
pub trait Autoencoder: Sync {
    fn latent_len(&self, image_len: usize) -> usize;
    fn encode(&self, pixels: &[f32]) -> Vec<f32>;
    fn decode(&self, latent: &[f32]) -> Vec<f32>;
    fn reconstruction_tolerance(&self) -> f32;
}

/// The identity autoencoder: latent space is pixel space, tolerance zero.
pub struct IdentityAutoencoder;

impl Autoencoder for IdentityAutoencoder {
    fn latent_len(&self, image_len: usize) -> usize {
        image_len
    }
    fn encode(&self, pixels: &[f32]) -> Vec<f32> {
        pixels.to_vec()
    }
    fn decode(&self, latent: &[f32]) -> Vec<f32> {
        latent.to_vec()
    }
    fn reconstruction_tolerance(&self) -> f32 {
        0.0
    }
}

/// A lossy stand-in autoencoder that quantizes pixels to a coarse grid.
/// Reconstruction error is bounded by half the grid step.
pub struct QuantizingAutoencoder {
    pub levels: u32,
}

impl Autoencoder for QuantizingAutoencoder {
    fn latent_len(&self, image_len: usize) -> usize {
        image_len
    }
    fn encode(&self, pixels: &[f32]) -> Vec<f32> {
        let n = (self.levels - 1) as f32;
        pixels.iter().map(|v| (v * n).round() / n).collect()
    }
    fn decode(&self, latent: &[f32]) -> Vec<f32> {
        latent.to_vec()
    }
    fn reconstruction_tolerance(&self) -> f32 {
        0.5 / (self.levels - 1) as f32
    }
}

fn check_query(model: &dyn Denoiser, x: &Image, mask: &Mask) -> Result<()> {
    if x.height != model.height() || x.width != model.width() || x.channels != model.channels() {
        return Err(Error::Dimension(format!(
            "query is {}x{}x{}, model expects {}x{}x{}",
            x.channels,
            x.height,
            x.width,
            model.channels(),
            model.height(),
            model.width()
        )));
    }
    if mask.height != x.height || mask.width != x.width {
        return Err(Error::Dimension(format!(
            "mask is {}x{}, image is {}x{}",
            mask.height, mask.width, x.height, x.width
        )));
    }
    Ok(())
}

/// Forward-noise the known image at sub-step `k` for remasking.
fn noised_known(
    x0: &[f32],
    eps: &[f32],
    sub: &SubSchedule,
    k: usize,
    literal_coef: bool,
) -> Vec<f32> {
    let ab = sub.alpha_bar(k);
    let signal = ab.sqrt() as f32;
    let noise = if literal_coef {
        (1.0 - ab) as f32
    } else {
        (1.0 - ab).sqrt() as f32
    };
    x0.iter()
        .zip(eps)
        .map(|(x, e)| signal * x + noise * e)
        .collect()
}

/// Composite `m * generated + (1-m) * known`, mask broadcast over channels.
fn composite(generated: &[f32], known: &[f32], mask: &Mask, channels: usize) -> Vec<f32> {
    let hw = mask.height * mask.width;
    let mut out = vec![0.0f32; generated.len()];
    for c in 0..channels {
        for i in 0..hw {
            let idx = c * hw + i;
            out[idx] = if mask.data[i] == 1 {
                generated[idx]
            } else {
                known[idx]
            };
        }
    }
    out
}

/// Pixel-space outpainting: remask at every step.
///
/// The returned image's known region equals `x` exactly; the masked region is
/// model-generated and clamped to `[0,1]`. Deterministic given the seed.
pub fn outpaint_pixel(
    model: &dyn Denoiser,
    x: &Image,
    cond: Option<&[f32]>,
    mask: &Mask,
    sub: &SubSchedule,
    config: &OutpaintConfig,
    seed: u64,
) -> Result<Image> {
    config.validate()?;
    check_query(model, x, mask)?;
    let len = x.len();
    let mut stream = rng::stream(seed, &["outpaint"]);
    let mut z = gaussian(&mut stream, len);
    for k in (1..=sub.len()).rev() {
        let t = sub.timestep(k);
        let eps_hat = model.predict_eps(&z, cond, t);
        if eps_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!(
                "denoiser produced non-finite values at step {t}"
            )));
        }
        let ztilde = if k > 1 {
            Some(gaussian(&mut stream, len))
        } else {
            None
        };
        ancestral_update(&mut z, &eps_hat, ztilde.as_deref(), sub, k);
        // Remask: fresh noise for the known region at every step.
        let eps = gaussian(&mut stream, len);
        let known = noised_known(&x.pixels, &eps, sub, k, config.literal_noise_coef);
        z = composite(&z, &known, mask, x.channels);
    }
    // Terminal remask at t=0: the known region is exactly preserved.
    let mut out = composite(&z, &x.pixels, mask, x.channels);
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Image::new(x.height, x.width, x.channels, out)
}

/// Latent-space outpainting over an autoencoder: ancestral updates run on the
/// latent; every `s` executed steps the latent is decoded, remasked in pixel
/// space and re-encoded. The final decode receives the same terminal remask
/// as the pixel variant, so with the identity autoencoder and `s = 1` both
/// variants agree to floating-point tolerance at equal seeds.
pub fn outpaint_latent(
    model: &dyn Denoiser,
    autoencoder: &dyn Autoencoder,
    x: &Image,
    cond: Option<&[f32]>,
    mask: &Mask,
    sub: &SubSchedule,
    config: &OutpaintConfig,
    seed: u64,
) -> Result<Image> {
    config.validate()?;
    check_query(model, x, mask)?;
    let len = x.len();
    let latent_len = autoencoder.latent_len(len);
    if model.pixel_count() != latent_len {
        return Err(Error::Dimension(format!(
            "model operates on {} entries but the latent has {latent_len}",
            model.pixel_count()
        )));
    }
    let s = config.remask_period;
    let mut stream = rng::stream(seed, &["outpaint"]);
    let mut z = gaussian(&mut stream, latent_len);
    for k in (1..=sub.len()).rev() {
        let t = sub.timestep(k);
        let eps_hat = model.predict_eps(&z, cond, t);
        if eps_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!(
                "denoiser produced non-finite values at step {t}"
            )));
        }
        let ztilde = if k > 1 {
            Some(gaussian(&mut stream, latent_len))
        } else {
            None
        };
        ancestral_update(&mut z, &eps_hat, ztilde.as_deref(), sub, k);
        if k % s == 0 {
            let eps = gaussian(&mut stream, len);
            let known = noised_known(&x.pixels, &eps, sub, k, config.literal_noise_coef);
            let unknown = autoencoder.decode(&z);
            if unknown.iter().any(|v| !v.is_finite()) {
                return Err(Error::Model("autoencoder produced non-finite pixels".into()));
            }
            let remasked = composite(&unknown, &known, mask, x.channels);
            z = autoencoder.encode(&remasked);
        }
    }
    let decoded = autoencoder.decode(&z);
    if decoded.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model("autoencoder produced non-finite pixels".into()));
    }
    let mut out = composite(&decoded, &x.pixels, mask, x.channels);
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Image::new(x.height, x.width, x.channels, out)
}

/// The predicted key of an outpainted image: the mean over the masked region.
/// Grayscale mode averages across all channels; rgb mode averages per channel.
pub fn predicted_key(outpainted: &Image, mask: &Mask, color_mode: ColorMode) -> Result<Key> {
    if mask.height != outpainted.height || mask.width != outpainted.width {
        return Err(Error::Dimension(format!(
            "mask is {}x{}, image is {}x{}",
            mask.height, mask.width, outpainted.height, outpainted.width
        )));
    }
    let area = mask.sum();
    if area == 0 {
        return Err(Error::Domain("mask has no pixels".into()));
    }
    let hw = mask.height * mask.width;
    let mut per_channel = vec![0.0f64; outpainted.channels];
    for (c, acc) in per_channel.iter_mut().enumerate() {
        for i in 0..hw {
            if mask.data[i] == 1 {
                *acc += outpainted.pixels[c * hw + i] as f64;
            }
        }
        *acc /= area as f64;
    }
    match color_mode {
        ColorMode::Grayscale => {
            let mean = per_channel.iter().sum::<f64>() / outpainted.channels as f64;
            Ok(Key::Gray(mean as f32))
        }
        ColorMode::Rgb => {
            if outpainted.channels != 3 {
                return Err(Error::Dimension(
                    "rgb key requires a 3-channel image".into(),
                ));
            }
            Ok(Key::Rgb([
                per_channel[0] as f32,
                per_channel[1] as f32,
                per_channel[2] as f32,
            ]))
        }
    }
}
