//! Datasets, key assignment, pattern augmentation, duplication injection,
//! query-time augmentations and lossless storage.
//!
//! Conventions chosen once and used everywhere:
//! - Pixels are `f32` in `[0,1]`, planar layout `(channel, row, col)`.
//! - Keys live on the 256-level grid `{0, 1/255, ..., 1}` so that 8-bit
//!   storage is lossless and stored borders encode keys exactly. The
//!   quantization error against a continuous draw is bounded by `1/510`.
//! - Masks are per-pixel (`height x width`), broadcast across channels:
//!   `1` marks the pattern region to be generated, `0` the known query region.
//! - Border patterns are appended: the augmented image is `(H+2p) x (W+2p)`.

mod augment;
mod io;
mod pattern;
mod synth;

pub use augment::{apply_transform, augment_query, crop_size, QueryTransform};
pub use io::{load_dataset, load_image, load_keymap, save_dataset, save_image};
pub use pattern::{
    apply_pattern, augment_dataset, blank_canvas, build_pattern_mask, stamp_pattern,
    strip_border,
};
pub use synth::{gen_synthetic_dataset, SyntheticConfig};

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Grid spacing of stored keys and 8-bit pixels.
pub const GRID_STEP: f32 = 1.0 / 255.0;

/// Snap a unit-interval value to the 256-level grid.
pub fn snap_to_grid(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// An image with pixels in `[0,1]`, planar `(channel, row, col)` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Dimension(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "pixel buffer has {} entries, expected {}",
                pixels.len(),
                height * width * channels
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Dimension(format!(
                "pixel value {bad} outside [0,1]"
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image {
            height,
            width,
            channels,
            pixels: vec![0.0; height * width * channels],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.idx(c, y, x);
        self.pixels[i] = v;
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Total number of pixel-channel entries.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Pattern color mode: one shared scalar across channels, or one per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorMode {
    Grayscale,
    Rgb,
}

/// A scalar key (grayscale) or per-channel key triple (rgb).
///
/// Keys assigned at training time are snapped to the 256-level grid; predicted
/// keys recovered from generated borders are continuous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Key {
    Gray(f32),
    Rgb([f32; 3]),
}

impl Key {
    pub fn color_mode(&self) -> ColorMode {
        match self {
            Key::Gray(_) => ColorMode::Grayscale,
            Key::Rgb(_) => ColorMode::Rgb,
        }
    }

    /// Intensity of channel `c` under this key.
    pub fn channel(&self, c: usize) -> f32 {
        match self {
            Key::Gray(v) => *v,
            Key::Rgb(v) => v[c.min(2)],
        }
    }

    pub fn components(&self) -> Vec<f32> {
        match self {
            Key::Gray(v) => vec![*v],
            Key::Rgb(v) => v.to_vec(),
        }
    }

    /// True when every component sits on the 256-level grid.
    pub fn is_grid_snapped(&self) -> bool {
        self.components()
            .iter()
            .all(|v| (v * 255.0 - (v * 255.0).round()).abs() < 1e-4)
    }
}

/// Persistent map from image id to its key.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Keymap {
    pub seed: u64,
    pub color_mode: ColorMode,
    pub entries: BTreeMap<String, Key>,
}

impl Keymap {
    pub fn key_for(&self, id: &str) -> Result<&Key> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::Integrity(format!("no key assigned to id `{id}`")))
    }

    /// Draw the key for `id` from this keymap's seed. Deterministic per
    /// `(seed, id)`; used both for initial assignment and for extending the
    /// map with duplicate ids.
    pub fn draw_key(seed: u64, id: &str, color_mode: ColorMode) -> Key {
        let mut rng = rng::stream(seed, &["key", id]);
        let mut draw = || rng.gen_range(0u32..=255) as f32 / 255.0;
        match color_mode {
            ColorMode::Grayscale => Key::Gray(draw()),
            ColorMode::Rgb => Key::Rgb([draw(), draw(), draw()]),
        }
    }
}

/// Where the pattern sits and how thick it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// A `p`-thick frame appended around the image.
    Border,
    /// A centered `p x p` patch overwriting image content.
    Center,
}

/// Pattern geometry: placement, thickness (frame width or patch side), color mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub placement: Placement,
    pub thickness: usize,
    pub color_mode: ColorMode,
}

impl PatternSpec {
    pub fn border(thickness: usize, color_mode: ColorMode) -> Self {
        PatternSpec {
            placement: Placement::Border,
            thickness,
            color_mode,
        }
    }

    pub fn center(side: usize, color_mode: ColorMode) -> Self {
        PatternSpec {
            placement: Placement::Center,
            thickness: side,
            color_mode,
        }
    }

    /// Dimensions of the augmented image for a `base_h x base_w` input.
    pub fn augmented_dims(&self, base_h: usize, base_w: usize) -> (usize, usize) {
        match self.placement {
            Placement::Border => (base_h + 2 * self.thickness, base_w + 2 * self.thickness),
            Placement::Center => (base_h, base_w),
        }
    }

    pub fn validate_for(&self, base_h: usize, base_w: usize) -> Result<()> {
        if self.thickness == 0 {
            return Err(Error::Config(
                "pattern thickness must be positive".to_string(),
            ));
        }
        if self.placement == Placement::Center
            && (self.thickness > base_h || self.thickness > base_w)
        {
            return Err(Error::Dimension(format!(
                "center patch {p}x{p} does not fit inside {base_h}x{base_w}",
                p = self.thickness
            )));
        }
        Ok(())
    }
}

/// Per-pixel binary mask; `1` marks the pattern region to be generated.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Number of masked pixels.
    pub fn sum(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }
}

/// An augmented image: query interior plus a key-bearing pattern region.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedImage {
    pub image: Image,
    pub spec: PatternSpec,
    pub key: Key,
}

impl AugmentedImage {
    pub fn mask(&self) -> Mask {
        // Construction guarantees spec/image consistency.
        build_pattern_mask(&self.spec, self.image.height, self.image.width)
            .expect("augmented image carries a consistent spec")
    }
}

/// One dataset item: stable id, pixels, caption, class label and, for
/// injected duplicates, the id of the original.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub id: String,
    pub image: Image,
    pub caption: String,
    pub class: u32,
    pub provenance: Option<String>,
}

impl DatasetItem {
    /// Id of the original this item descends from (itself if not a duplicate).
    pub fn origin(&self) -> &str {
        self.provenance.as_deref().unwrap_or(&self.id)
    }
}

/// Manifest header: the seeds and pattern geometry a dataset was built with.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub version: u32,
    pub seed: u64,
    /// Present once images carry a stamped pattern.
    pub pattern: Option<PatternSpec>,
}

/// An in-memory dataset of captioned images with an optional keymap.
#[derive(Debug, Clone)]
pub struct CaptionedDataset {
    pub meta: DatasetMeta,
    pub items: Vec<DatasetItem>,
    pub keymap: Option<Keymap>,
}

impl CaptionedDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id: &str) -> Result<&DatasetItem> {
        self.items
            .iter()
            .find(|it| it.id == id)
            .ok_or_else(|| Error::Lookup(id.to_string()))
    }

    /// The keymap, or an explicit "keymap absent" error. Keys are never
    /// regenerated silently.
    pub fn require_keymap(&self) -> Result<&Keymap> {
        self.keymap
            .as_ref()
            .ok_or_else(|| Error::KeymapAbsent("dataset has no keymap".to_string()))
    }

    pub fn check_unique_ids(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for item in &self.items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate id `{}`", item.id)));
            }
        }
        Ok(())
    }
}

/// Assign i.i.d. grid-uniform keys to every item. Deterministic per
/// `(seed, id)`: recomputing an id's key always yields the same value.
pub fn assign_keys(dataset: &CaptionedDataset, seed: u64, color_mode: ColorMode) -> Result<Keymap> {
    dataset.check_unique_ids()?;
    let mut entries = BTreeMap::new();
    for item in &dataset.items {
        entries.insert(item.id.clone(), Keymap::draw_key(seed, &item.id, color_mode));
    }
    Ok(Keymap {
        seed,
        color_mode,
        entries,
    })
}

/// Inject exact duplicates of the given originals.
///
/// Each duplicate gets a fresh unique id (`<orig>.dNN`) and records its
/// provenance; `replication_counts[i]` is the total number of instances item
/// `image_ids[i]` ends up with. With `independent_keys` every duplicate draws
/// its own key from the keymap seed; otherwise duplicates share the original's
/// key. Original items are left unchanged.
pub fn inject_duplicates(
    dataset: &CaptionedDataset,
    image_ids: &[String],
    replication_counts: &[usize],
    independent_keys: bool,
) -> Result<CaptionedDataset> {
    if image_ids.len() != replication_counts.len() {
        return Err(Error::Config(format!(
            "{} ids but {} replication counts",
            image_ids.len(),
            replication_counts.len()
        )));
    }
    if let Some(c) = replication_counts.iter().find(|&&c| c < 2) {
        return Err(Error::Config(format!(
            "replication count must be >= 2, got {c}"
        )));
    }
    let mut keymap = dataset.require_keymap()?.clone();
    let mut out = dataset.clone();
    for (id, &count) in image_ids.iter().zip(replication_counts) {
        let original = dataset.item(id)?.clone();
        let original_key = *keymap.key_for(id)?;
        for k in 2..=count {
            let dup_id = format!("{id}.d{k:02}");
            if out.items.iter().any(|it| it.id == dup_id) {
                return Err(Error::Integrity(format!("id `{dup_id}` already exists")));
            }
            let key = if independent_keys {
                Keymap::draw_key(keymap.seed, &dup_id, keymap.color_mode)
            } else {
                original_key
            };
            keymap.entries.insert(dup_id.clone(), key);
            out.items.push(DatasetItem {
                id: dup_id,
                image: original.image.clone(),
                caption: original.caption.clone(),
                class: original.class,
                provenance: Some(id.clone()),
            });
        }
    }
    out.keymap = Some(keymap);
    out.check_unique_ids()?;
    Ok(out)
}

#[cfg(test)]
mod tests;
