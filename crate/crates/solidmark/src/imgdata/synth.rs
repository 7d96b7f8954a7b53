//! Procedural synthetic datasets: small class-correlated shape/texture images
//! a desk-scale model can learn, with class names as captions.

use super::{snap_to_grid, CaptionedDataset, DatasetItem, DatasetMeta, Image};
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub count: usize,
    pub base_size: usize,
    pub num_classes: usize,
    pub seed: u64,
}

const SHAPES: [&str; 6] = ["disc", "frame", "stripes", "cross", "rings", "wedge"];
const TINTS: [(&str, [f32; 3]); 7] = [
    ("crimson", [0.85, 0.15, 0.20]),
    ("amber", [0.95, 0.70, 0.10]),
    ("moss", [0.30, 0.65, 0.25]),
    ("teal", [0.10, 0.60, 0.60]),
    ("indigo", [0.25, 0.25, 0.75]),
    ("plum", [0.60, 0.25, 0.60]),
    ("slate", [0.45, 0.50, 0.55]),
];

fn class_name(class: usize) -> String {
    let tint = TINTS[class % TINTS.len()].0;
    let shape = SHAPES[(class / TINTS.len()) % SHAPES.len()];
    let round = class / (TINTS.len() * SHAPES.len());
    if round == 0 {
        format!("{tint} {shape}")
    } else {
        format!("{tint} {shape} v{round}")
    }
}

/// Generate a deterministic dataset of procedurally drawn 3-channel images.
///
/// Images within a class share shape kind and tint; position, scale, phase and
/// background vary per image. All pixels are snapped to the 8-bit grid so
/// storage round trips are bit-exact.
pub fn gen_synthetic_dataset(config: &SyntheticConfig) -> Result<CaptionedDataset> {
    if config.count < 1 {
        return Err(Error::Config("count must be >= 1".to_string()));
    }
    if config.base_size < 8 {
        return Err(Error::Config(format!(
            "base_size must be >= 8, got {}",
            config.base_size
        )));
    }
    if config.num_classes < 1 {
        return Err(Error::Config("num_classes must be >= 1".to_string()));
    }
    let mut items = Vec::with_capacity(config.count);
    for i in 0..config.count {
        let id = format!("img-{i:06}");
        let class = i % config.num_classes;
        let image = draw_image(config.seed, &id, class, config.base_size);
        items.push(DatasetItem {
            id,
            image,
            caption: class_name(class),
            class: class as u32,
            provenance: None,
        });
    }
    Ok(CaptionedDataset {
        meta: DatasetMeta {
            version: 1,
            seed: config.seed,
            pattern: None,
        },
        items,
        keymap: None,
    })
}

fn draw_image(seed: u64, id: &str, class: usize, size: usize) -> Image {
    let mut rng = rng::stream(seed, &["synth", id]);
    let tint = TINTS[class % TINTS.len()].1;
    let shape = (class / TINTS.len()) % SHAPES.len();

    // Background: a two-corner gradient in a dimmed complementary tone.
    let bg_a: [f32; 3] = [
        0.15 + 0.25 * rng.gen::<f32>(),
        0.15 + 0.25 * rng.gen::<f32>(),
        0.15 + 0.25 * rng.gen::<f32>(),
    ];
    let bg_b: [f32; 3] = [
        0.55 + 0.30 * rng.gen::<f32>(),
        0.55 + 0.30 * rng.gen::<f32>(),
        0.55 + 0.30 * rng.gen::<f32>(),
    ];
    let diag = rng.gen::<bool>();

    let s = size as f32;
    let cx = s * (0.35 + 0.3 * rng.gen::<f32>());
    let cy = s * (0.35 + 0.3 * rng.gen::<f32>());
    let radius = s * (0.18 + 0.14 * rng.gen::<f32>());
    let phase = rng.gen::<f32>() * s;
    let period = s * (0.12 + 0.10 * rng.gen::<f32>());

    let mut img = Image::zeros(size, size, 3);
    for y in 0..size {
        for x in 0..size {
            let (fy, fx) = (y as f32, x as f32);
            let t = if diag {
                (fy + fx) / (2.0 * s)
            } else {
                fy / s
            };
            let dx = fx - cx;
            let dy = fy - cy;
            let r = (dx * dx + dy * dy).sqrt();
            let inside = match shape {
                0 => r < radius,
                1 => {
                    let d = dx.abs().max(dy.abs());
                    d < radius && d > radius * 0.55
                }
                2 => ((fx + phase) / period).floor() as i64 % 2 == 0,
                3 => dx.abs() < radius * 0.3 || dy.abs() < radius * 0.3,
                4 => ((r / (radius * 0.5)).floor() as i64) % 2 == 0 && r < radius * 2.0,
                _ => dx.abs() + dy.abs() < radius && dy > 0.0,
            };
            // Per-pixel film grain keeps histograms non-degenerate.
            let grain = (rng.gen::<f32>() - 0.5) * (3.0 / 255.0);
            for c in 0..3 {
                let base = bg_a[c] + (bg_b[c] - bg_a[c]) * t;
                let v = if inside { 0.65 * tint[c] + 0.35 * base } else { base };
                img.set(c, y, x, snap_to_grid(v + grain));
            }
        }
    }
    img
}
