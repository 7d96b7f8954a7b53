//! Query-time augmentations: random crop-and-resize, Gaussian blur, small
//! rotations. Only the query interior is transformed; the pattern region is
//! reapplied afterward so masked pixels always equal the key.

use super::{apply_pattern, stamp_pattern, strip_border, AugmentedImage, Image, Placement};
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Enumerated query transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum QueryTransform {
    Identity,
    /// Random crop to relative size `1 - 0.2 * level`, resized back.
    Crop { level: u8 },
    /// Gaussian blur with kernel side `4 * level + 1`.
    Blur { level: u8 },
    /// Rotation about the center; allowed degrees: -2, -1, 1, 2, 180.
    Rotate { degrees: i32 },
}

impl QueryTransform {
    pub fn validate(&self) -> Result<()> {
        match self {
            QueryTransform::Identity => Ok(()),
            QueryTransform::Crop { level } | QueryTransform::Blur { level } => {
                if *level > 4 {
                    Err(Error::Config(format!(
                        "augmentation level must be in 0..=4, got {level}"
                    )))
                } else {
                    Ok(())
                }
            }
            QueryTransform::Rotate { degrees } => {
                if matches!(degrees, -2 | -1 | 1 | 2 | 180) {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "rotation must be one of -2, -1, 1, 2, 180 degrees, got {degrees}"
                    )))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            QueryTransform::Identity => "identity".to_string(),
            QueryTransform::Crop { level } => format!("crop{level}"),
            QueryTransform::Blur { level } => format!("blur{level}"),
            QueryTransform::Rotate { degrees } => format!("rotate{degrees}"),
        }
    }
}

/// Transform the query interior of an augmented image, then restore the
/// pattern. Deterministic given `seed` (the crop position is the only random
/// draw).
pub fn augment_query(
    augmented: &AugmentedImage,
    transform: &QueryTransform,
    seed: u64,
) -> Result<AugmentedImage> {
    transform.validate()?;
    match augmented.spec.placement {
        Placement::Border => {
            let interior = strip_border(&augmented.image, augmented.spec.thickness)?;
            let transformed = apply_transform(&interior, transform, seed)?;
            apply_pattern(&transformed, &augmented.key, &augmented.spec)
        }
        Placement::Center => {
            // The patch overwrites content, so transform the whole image and
            // restore the patch afterward.
            let transformed = apply_transform(&augmented.image, transform, seed)?;
            let mut out = AugmentedImage {
                image: transformed,
                spec: augmented.spec,
                key: augmented.key,
            };
            stamp_pattern(&mut out.image, &augmented.key, &augmented.spec)?;
            Ok(out)
        }
    }
}

/// Apply a transform to a plain image.
pub fn apply_transform(image: &Image, transform: &QueryTransform, seed: u64) -> Result<Image> {
    transform.validate()?;
    match transform {
        QueryTransform::Identity => Ok(image.clone()),
        QueryTransform::Crop { level: 0 } | QueryTransform::Blur { level: 0 } => Ok(image.clone()),
        QueryTransform::Crop { level } => crop_and_resize(image, *level, seed),
        QueryTransform::Blur { level } => Ok(gaussian_blur(image, 4 * *level as usize + 1)),
        QueryTransform::Rotate { degrees: 180 } => Ok(rotate_180(image)),
        QueryTransform::Rotate { degrees } => Ok(rotate_small(image, *degrees as f32)),
    }
}

/// Side length of the pre-resize crop at the given level:
/// `round(dim * (1 - 0.2 * level))`.
pub fn crop_size(dim: usize, level: u8) -> usize {
    let rel = 1.0 - 0.2 * level as f32;
    ((dim as f32 * rel).round() as usize).max(1)
}

fn crop_and_resize(image: &Image, level: u8, seed: u64) -> Result<Image> {
    let ch = crop_size(image.height, level);
    let cw = crop_size(image.width, level);
    let mut rng = rng::stream(seed, &["crop", &level.to_string()]);
    let y0 = rng.gen_range(0..=image.height - ch);
    let x0 = rng.gen_range(0..=image.width - cw);
    let mut crop = Image::zeros(ch, cw, image.channels);
    for c in 0..image.channels {
        for y in 0..ch {
            let src = image.idx(c, y0 + y, x0);
            let dst = crop.idx(c, y, 0);
            crop.pixels[dst..dst + cw].copy_from_slice(&image.pixels[src..src + cw]);
        }
    }
    Ok(resize_bilinear(&crop, image.height, image.width))
}

fn resize_bilinear(image: &Image, out_h: usize, out_w: usize) -> Image {
    let mut out = Image::zeros(out_h, out_w, image.channels);
    let sy = image.height as f32 / out_h as f32;
    let sx = image.width as f32 / out_w as f32;
    for c in 0..image.channels {
        for y in 0..out_h {
            // Align sample centers.
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, image.height as f32 - 1.0);
            let y1 = fy.floor() as usize;
            let y2 = (y1 + 1).min(image.height - 1);
            let wy = fy - y1 as f32;
            for x in 0..out_w {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, image.width as f32 - 1.0);
                let x1 = fx.floor() as usize;
                let x2 = (x1 + 1).min(image.width - 1);
                let wx = fx - x1 as f32;
                let v = image.get(c, y1, x1) * (1.0 - wy) * (1.0 - wx)
                    + image.get(c, y1, x2) * (1.0 - wy) * wx
                    + image.get(c, y2, x1) * wy * (1.0 - wx)
                    + image.get(c, y2, x2) * wy * wx;
                out.set(c, y, x, v.clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// Separable Gaussian blur with reflected borders; sigma follows the common
/// kernel-size heuristic `0.3 * ((k - 1) * 0.5 - 1) + 0.8`.
fn gaussian_blur(image: &Image, ksize: usize) -> Image {
    let sigma = 0.3 * ((ksize as f32 - 1.0) * 0.5 - 1.0) + 0.8;
    let half = (ksize / 2) as i64;
    let mut kernel = Vec::with_capacity(ksize);
    for i in -half..=half {
        kernel.push((-0.5 * (i as f32 / sigma).powi(2)).exp());
    }
    let norm: f32 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= norm;
    }

    let reflect = |i: i64, n: i64| -> usize {
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - 1 - i;
        }
        i.clamp(0, n - 1) as usize
    };

    let mut tmp = Image::zeros(image.height, image.width, image.channels);
    for c in 0..image.channels {
        for y in 0..image.height {
            for x in 0..image.width {
                let mut acc = 0.0;
                for (j, k) in kernel.iter().enumerate() {
                    let xx = reflect(x as i64 + j as i64 - half, image.width as i64);
                    acc += k * image.get(c, y, xx);
                }
                tmp.set(c, y, x, acc);
            }
        }
    }
    let mut out = Image::zeros(image.height, image.width, image.channels);
    for c in 0..image.channels {
        for y in 0..image.height {
            for x in 0..image.width {
                let mut acc = 0.0;
                for (j, k) in kernel.iter().enumerate() {
                    let yy = reflect(y as i64 + j as i64 - half, image.height as i64);
                    acc += k * tmp.get(c, yy, x);
                }
                out.set(c, y, x, acc.clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// Exact pixel flip; involutive, no interpolation.
fn rotate_180(image: &Image) -> Image {
    let mut out = Image::zeros(image.height, image.width, image.channels);
    for c in 0..image.channels {
        for y in 0..image.height {
            for x in 0..image.width {
                out.set(
                    c,
                    image.height - 1 - y,
                    image.width - 1 - x,
                    image.get(c, y, x),
                );
            }
        }
    }
    out
}

/// Small-angle rotation about the center with bilinear sampling. Out-of-range
/// source coordinates reflect at the edges, which avoids introducing a
/// spurious constant frame.
fn rotate_small(image: &Image, degrees: f32) -> Image {
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (image.height as f32 - 1.0) / 2.0;
    let cx = (image.width as f32 - 1.0) / 2.0;
    let reflect = |v: f32, n: f32| -> f32 {
        let mut v = v;
        if v < 0.0 {
            v = -v;
        }
        if v > n - 1.0 {
            v = 2.0 * (n - 1.0) - v;
        }
        v.clamp(0.0, n - 1.0)
    };
    let mut out = Image::zeros(image.height, image.width, image.channels);
    for c in 0..image.channels {
        for y in 0..image.height {
            for x in 0..image.width {
                // Inverse map: sample where this output pixel came from.
                let dy = y as f32 - cy;
                let dx = x as f32 - cx;
                let sy = reflect(cy + dy * cos - dx * sin, image.height as f32);
                let sx = reflect(cx + dy * sin + dx * cos, image.width as f32);
                let y1 = sy.floor() as usize;
                let x1 = sx.floor() as usize;
                let y2 = (y1 + 1).min(image.height - 1);
                let x2 = (x1 + 1).min(image.width - 1);
                let wy = sy - y1 as f32;
                let wx = sx - x1 as f32;
                let v = image.get(c, y1, x1) * (1.0 - wy) * (1.0 - wx)
                    + image.get(c, y1, x2) * (1.0 - wy) * wx
                    + image.get(c, y2, x1) * wy * (1.0 - wx)
                    + image.get(c, y2, x2) * wy * wx;
                out.set(c, y, x, v.clamp(0.0, 1.0));
            }
        }
    }
    out
}
