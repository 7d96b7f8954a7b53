//! Pattern stamping: borders appended around the image, or center patches
//! overwriting image content.

use super::{
    AugmentedImage, CaptionedDataset, Image, Key, Mask, PatternSpec, Placement,
};
use crate::error::{Error, Result};

/// Write the pattern region of an already augmented-size image in place.
pub fn stamp_pattern(image: &mut Image, key: &Key, spec: &PatternSpec) -> Result<()> {
    let mask = build_pattern_mask(spec, image.height, image.width)?;
    for c in 0..image.channels {
        let v = key.channel(c);
        for y in 0..image.height {
            for x in 0..image.width {
                if mask.get(y, x) == 1 {
                    image.set(c, y, x, v);
                }
            }
        }
    }
    Ok(())
}

/// Augment an image with a key-bearing pattern.
///
/// Border mode returns an `(H+2p) x (W+2p)` image whose outer `p`-thick frame
/// equals the key intensity on all channels (per-channel in rgb mode) and
/// whose interior equals the original exactly. Center mode overwrites a
/// centered `p x p` patch and preserves dimensions.
pub fn apply_pattern(image: &Image, key: &Key, spec: &PatternSpec) -> Result<AugmentedImage> {
    spec.validate_for(image.height, image.width)?;
    let (ah, aw) = spec.augmented_dims(image.height, image.width);
    let mut out = Image::zeros(ah, aw, image.channels);
    let off = match spec.placement {
        Placement::Border => spec.thickness,
        Placement::Center => 0,
    };
    for c in 0..image.channels {
        for y in 0..image.height {
            let src = image.idx(c, y, 0);
            let dst = out.idx(c, y + off, off);
            out.pixels[dst..dst + image.width]
                .copy_from_slice(&image.pixels[src..src + image.width]);
        }
    }
    stamp_pattern(&mut out, key, spec)?;
    Ok(AugmentedImage {
        image: out,
        spec: *spec,
        key: *key,
    })
}

/// Per-pixel mask over the augmented dims: `1` exactly on the pattern region.
pub fn build_pattern_mask(spec: &PatternSpec, aug_h: usize, aug_w: usize) -> Result<Mask> {
    let p = spec.thickness;
    let mut data = vec![0u8; aug_h * aug_w];
    match spec.placement {
        Placement::Border => {
            if 2 * p >= aug_h || 2 * p >= aug_w {
                return Err(Error::Dimension(format!(
                    "border thickness {p} leaves no interior in {aug_h}x{aug_w}"
                )));
            }
            for y in 0..aug_h {
                for x in 0..aug_w {
                    if y < p || y >= aug_h - p || x < p || x >= aug_w - p {
                        data[y * aug_w + x] = 1;
                    }
                }
            }
        }
        Placement::Center => {
            if p > aug_h || p > aug_w {
                return Err(Error::Dimension(format!(
                    "center patch {p}x{p} exceeds {aug_h}x{aug_w}"
                )));
            }
            let y0 = (aug_h - p) / 2;
            let x0 = (aug_w - p) / 2;
            for y in y0..y0 + p {
                for x in x0..x0 + p {
                    data[y * aug_w + x] = 1;
                }
            }
        }
    }
    Ok(Mask {
        height: aug_h,
        width: aug_w,
        data,
    })
}

/// The augmented-size query canvas for an image: interior in place, pattern
/// region zeroed. Outpainting masks cover the pattern region, so its content
/// is irrelevant; zeroing guarantees the true key cannot leak through.
pub fn blank_canvas(image: &Image, spec: &PatternSpec) -> Result<Image> {
    let zero = match spec.color_mode {
        super::ColorMode::Grayscale => Key::Gray(0.0),
        super::ColorMode::Rgb => Key::Rgb([0.0; 3]),
    };
    Ok(apply_pattern(image, &zero, spec)?.image)
}

/// Recover the interior of a border-augmented image (inverse of the append).
pub fn strip_border(augmented: &Image, thickness: usize) -> Result<Image> {
    let p = thickness;
    if 2 * p >= augmented.height || 2 * p >= augmented.width {
        return Err(Error::Dimension(format!(
            "cannot strip border {p} from {}x{}",
            augmented.height, augmented.width
        )));
    }
    let (h, w) = (augmented.height - 2 * p, augmented.width - 2 * p);
    let mut out = Image::zeros(h, w, augmented.channels);
    for c in 0..augmented.channels {
        for y in 0..h {
            let src = augmented.idx(c, y + p, p);
            let dst = out.idx(c, y, 0);
            out.pixels[dst..dst + w].copy_from_slice(&augmented.pixels[src..src + w]);
        }
    }
    Ok(out)
}

/// Stamp every item of a dataset with its key. Item images become the
/// augmented images; the pattern is recorded in the manifest meta.
pub fn augment_dataset(dataset: &CaptionedDataset, spec: &PatternSpec) -> Result<CaptionedDataset> {
    let keymap = dataset.require_keymap()?.clone();
    let mut out = dataset.clone();
    out.meta.pattern = Some(*spec);
    for item in &mut out.items {
        let key = keymap.key_for(&item.id)?;
        item.image = apply_pattern(&item.image, key, spec)?.image;
    }
    Ok(out)
}
