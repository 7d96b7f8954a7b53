//! Lossless dataset storage.
//!
//! Layout of a dataset directory:
//! - `manifest.jsonl` — first line is the meta record, then one record per
//!   item `{id, file, caption, class, provenance}` in item order.
//! - `keymap.json` — `{seed, color_mode, entries}`; absent if no keys assigned.
//! - `images/<id>.png` — 8-bit PNG, bit-exact for grid-snapped pixels.

use super::{CaptionedDataset, DatasetItem, DatasetMeta, Image, Keymap};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestItem {
    id: String,
    file: String,
    caption: String,
    class: u32,
    provenance: Option<String>,
}

/// Quantize a unit-interval pixel to 8 bits. Exact for grid-snapped values.
fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn from_u8(v: u8) -> f32 {
    v as f32 / 255.0
}

/// Save one image as PNG. Pixels not on the 8-bit grid are rounded.
pub fn save_image(image: &Image, path: &Path) -> Result<()> {
    let w = image.width as u32;
    let h = image.height as u32;
    let err = |e: image::ImageError| Error::io(path.display().to_string(), std::io::Error::other(e));
    match image.channels {
        1 => {
            let mut buf = image::GrayImage::new(w, h);
            for (y, x, p) in iter_pixels(image) {
                buf.put_pixel(x, y, image::Luma([to_u8(p[0])]));
            }
            buf.save(path).map_err(err)
        }
        3 => {
            let mut buf = image::RgbImage::new(w, h);
            for (y, x, p) in iter_pixels(image) {
                buf.put_pixel(x, y, image::Rgb([to_u8(p[0]), to_u8(p[1]), to_u8(p[2])]));
            }
            buf.save(path).map_err(err)
        }
        c => Err(Error::Dimension(format!("unsupported channel count {c}"))),
    }
}

fn iter_pixels(image: &Image) -> impl Iterator<Item = (u32, u32, [f32; 3])> + '_ {
    (0..image.height).flat_map(move |y| {
        (0..image.width).map(move |x| {
            let mut p = [0.0f32; 3];
            for c in 0..image.channels {
                p[c] = image.get(c, y, x);
            }
            (y as u32, x as u32, p)
        })
    })
}

pub fn load_image(path: &Path) -> Result<Image> {
    let dynimg = image::open(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    match dynimg {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let mut out = Image::zeros(h, w, 1);
            for (x, y, p) in buf.enumerate_pixels() {
                out.set(0, y as usize, x as usize, from_u8(p.0[0]));
            }
            Ok(out)
        }
        other => {
            let buf = other.into_rgb8();
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let mut out = Image::zeros(h, w, 3);
            for (x, y, p) in buf.enumerate_pixels() {
                for c in 0..3 {
                    out.set(c, y as usize, x as usize, from_u8(p.0[c]));
                }
            }
            Ok(out)
        }
    }
}

/// Write manifest, keymap and images under `dir`.
pub fn save_dataset(dataset: &CaptionedDataset, dir: &Path) -> Result<()> {
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(images_dir.display().to_string(), e))?;

    let manifest_path = dir.join("manifest.jsonl");
    let file = fs::File::create(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let mut out = BufWriter::new(file);
    let meta_line = serde_json::to_string(&dataset.meta).expect("meta serializes");
    writeln!(out, "{meta_line}").map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    for item in &dataset.items {
        let file_name = format!("images/{}.png", item.id);
        save_image(&item.image, &dir.join(&file_name))?;
        let record = ManifestItem {
            id: item.id.clone(),
            file: file_name,
            caption: item.caption.clone(),
            class: item.class,
            provenance: item.provenance.clone(),
        };
        let line = serde_json::to_string(&record).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    }
    out.flush()
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;

    if let Some(keymap) = &dataset.keymap {
        save_keymap(keymap, &dir.join("keymap.json"))?;
    }
    Ok(())
}

pub fn save_keymap(keymap: &Keymap, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(keymap).expect("keymap serializes");
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Load the keymap file; an absent file is an explicit error, never a silent
/// regeneration.
pub fn load_keymap(path: &Path) -> Result<Keymap> {
    if !path.exists() {
        return Err(Error::KeymapAbsent(path.display().to_string()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        record: 0,
        message: e.to_string(),
    })
}

/// Load a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<CaptionedDataset> {
    let manifest_path = dir.join("manifest.jsonl");
    let file = fs::File::open(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        path: manifest_path.display().to_string(),
        record: 0,
        message: "empty manifest".to_string(),
    })?;
    let first = first.map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let meta: DatasetMeta = serde_json::from_str(&first).map_err(|e| Error::Parse {
        path: manifest_path.display().to_string(),
        record: 0,
        message: e.to_string(),
    })?;

    let mut items = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: manifest_path.display().to_string(),
            record: n,
            message: e.to_string(),
        })?;
        let image = load_image(&dir.join(&record.file))?;
        items.push(DatasetItem {
            id: record.id,
            image,
            caption: record.caption,
            class: record.class,
            provenance: record.provenance,
        });
    }

    let keymap_path = dir.join("keymap.json");
    let keymap = if keymap_path.exists() {
        Some(load_keymap(&keymap_path)?)
    } else {
        None
    };

    let ds = CaptionedDataset {
        meta,
        items,
        keymap,
    };
    ds.check_unique_ids()?;
    Ok(ds)
}
