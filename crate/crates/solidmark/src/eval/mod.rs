//! End-to-end per-image memorization evaluation: outpaint a training image's
//! pattern region, read the predicted key off the masked mean, compare with
//! the true key, and aggregate eidetic counts over a threshold set.

use crate::diffusion::{embed_caption, Denoiser, SubSchedule};
use crate::error::{Error, Result};
use crate::experiments::calibration::fp_rate_any_of_grid;
use crate::imgdata::{
    build_pattern_mask, CaptionedDataset, DatasetItem, Image, Key, Keymap, Mask, PatternSpec,
};
use crate::metrics::{key_distance, ThresholdSet};
use crate::outpaint::{outpaint_latent, outpaint_pixel, Autoencoder, OutpaintConfig};
use crate::rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;


/// Evaluation configuration: thresholds, subset size, repeats per image,
/// pattern geometry and outpainting knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    pub thresholds: ThresholdSet,
    pub subset_size: usize,
    pub repeats: usize,
    pub seed: u64,
    pub pattern: PatternSpec,
    pub outpaint: OutpaintConfig,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if self.subset_size == 0 {
            return Err(Error::Config("subset size must be >= 1".into()));
        }
        self.outpaint.validate()
    }
}

/// One outpainting query: the augmented-size canvas with the pattern region
/// zeroed, the caption, the mask and the per-trial seed.
pub struct OutpaintQuery<'a> {
    pub id: &'a str,
    pub canvas: &'a Image,
    pub caption: &'a str,
    pub mask: &'a Mask,
    pub trial_seed: u64,
}

/// Anything that can answer an outpainting query: a trained diffusion model
/// (pixel or latent variant) or a calibration oracle.
pub trait QueryModel: Sync {
    fn outpaint_query(&self, query: &OutpaintQuery<'_>) -> Result<Image>;
}

/// How a trained model derives its condition embedding for a query.
pub enum CondSource<'a> {
    Unconditional,
    /// Embed the training caption verbatim.
    Caption,
    /// Custom hook (mitigation methods transform the caption or perturb the
    /// embedding here). Receives the query, returns the embedding.
    Custom(&'a (dyn Fn(&OutpaintQuery<'_>) -> Result<Option<Vec<f32>>> + Sync)),
}

/// Pixel-space or autoencoder-backed outpainting.
pub enum Variant<'a> {
    Pixel,
    Latent { autoencoder: &'a dyn Autoencoder },
}

/// A trained denoiser bound to an outpainting variant and conditioning source.
pub struct DiffusionQueryModel<'a> {
    pub denoiser: &'a dyn Denoiser,
    pub sub: SubSchedule,
    pub config: OutpaintConfig,
    pub variant: Variant<'a>,
    pub conditioning: CondSource<'a>,
}

impl QueryModel for DiffusionQueryModel<'_> {
    fn outpaint_query(&self, query: &OutpaintQuery<'_>) -> Result<Image> {
        let cond = match &self.conditioning {
            CondSource::Unconditional => None,
            CondSource::Caption => Some(embed_caption(query.caption)?),
            CondSource::Custom(f) => f(query)?,
        };
        match &self.variant {
            Variant::Pixel => outpaint_pixel(
                self.denoiser,
                query.canvas,
                cond.as_deref(),
                query.mask,
                &self.sub,
                &self.config,
                query.trial_seed,
            ),
            Variant::Latent { autoencoder } => outpaint_latent(
                self.denoiser,
                *autoencoder,
                query.canvas,
                cond.as_deref(),
                query.mask,
                &self.sub,
                &self.config,
                query.trial_seed,
            ),
        }
    }
}

/// Zero the pattern region of an augmented image, producing the query canvas.
pub fn query_canvas(augmented: &Image, mask: &Mask) -> Image {
    let hw = mask.height * mask.width;
    let mut out = augmented.clone();
    for c in 0..out.channels {
        for i in 0..hw {
            if mask.data[i] == 1 {
                out.pixels[c * hw + i] = 0.0;
            }
        }
    }
    out
}

/// Per-trial seed: a pure function of `(seed, id, trial index)` so results do
/// not depend on evaluation order.
pub fn trial_seed(seed: u64, id: &str, trial: usize) -> u64 {
    rng::sub_seed(seed, &["trial", id, &trial.to_string()])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub predicted: Key,
    pub distance: f64,
}

/// Outcome of a per-image memorization query.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub memorized: bool,
    pub trials: Vec<TrialRecord>,
}

fn run_trials(
    model: &dyn QueryModel,
    item: &DatasetItem,
    keymap: &Keymap,
    spec: &PatternSpec,
    repeats: usize,
    seed: u64,
    stop_at: Option<f64>,
) -> Result<(Key, Vec<TrialRecord>)> {
    let true_key = *keymap.key_for(&item.id)?;
    let mask = build_pattern_mask(spec, item.image.height, item.image.width)?;
    let canvas = query_canvas(&item.image, &mask);
    let mut trials = Vec::with_capacity(repeats);
    for i in 1..=repeats {
        let query = OutpaintQuery {
            id: &item.id,
            canvas: &canvas,
            caption: &item.caption,
            mask: &mask,
            trial_seed: trial_seed(seed, &item.id, i),
        };
        let out = model.outpaint_query(&query)?;
        let predicted = crate::outpaint::predicted_key(&out, &mask, keymap.color_mode)?;
        let distance = key_distance(&predicted, &true_key)?;
        trials.push(TrialRecord {
            predicted,
            distance,
        });
        if let Some(delta) = stop_at {
            if distance <= delta {
                break;
            }
        }
    }
    Ok((true_key, trials))
}

/// Is this image `(l_SM, delta)`-eidetically memorized? Runs up to `repeats`
/// outpainting trials and returns true on the first trial within `delta`;
/// all executed trials are recorded.
#[allow(clippy::too_many_arguments)]
pub fn is_image_memorized(
    model: &dyn QueryModel,
    item: &DatasetItem,
    delta: f64,
    keymap: &Keymap,
    spec: &PatternSpec,
    repeats: usize,
    seed: u64,
) -> Result<QueryOutcome> {
    let (_key, trials) = run_trials(model, item, keymap, spec, repeats, seed, Some(delta))?;
    let memorized = trials.iter().any(|t| t.distance <= delta);
    Ok(QueryOutcome { memorized, trials })
}

/// Continuous per-image memorization score: the minimum key distance over
/// `repeats` trials. Lower means more memorized.
pub fn per_image_score(
    model: &dyn QueryModel,
    item: &DatasetItem,
    keymap: &Keymap,
    spec: &PatternSpec,
    repeats: usize,
    seed: u64,
) -> Result<f64> {
    let (_key, trials) = run_trials(model, item, keymap, spec, repeats, seed, None)?;
    Ok(trials
        .iter()
        .map(|t| t.distance)
        .fold(f64::INFINITY, f64::min))
}

/// Per-image evaluation row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRow {
    pub id: String,
    pub true_key: Key,
    pub trials: Vec<TrialRecord>,
    pub min_distance: f64,
}

/// Whole-model evaluation report: per-image rows, eidetic counts per
/// threshold, the analytic chance baselines, and the config echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemorizationReport {
    pub config: EvalConfig,
    pub evaluated: usize,
    pub rows: Vec<ImageRow>,
    /// `(delta, count)` in descending delta order.
    pub counts: Vec<(f64, usize)>,
    /// `(delta, any-of-r chance rate)` for reading counts against chance.
    pub fp_baselines: Vec<(f64, f64)>,
}

impl MemorizationReport {
    /// Recompute counts from the per-image rows (self-consistency check).
    pub fn recount(&self) -> Vec<(f64, usize)> {
        self.config
            .thresholds
            .deltas()
            .iter()
            .map(|&d| {
                (
                    d,
                    self.rows.iter().filter(|r| r.min_distance <= d).count(),
                )
            })
            .collect()
    }

    pub fn count_at(&self, delta: f64) -> Option<usize> {
        self.counts
            .iter()
            .find(|(d, _)| (*d - delta).abs() < 1e-12)
            .map(|(_, c)| *c)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "evaluated {} images, {} trial(s) each, seed {}\n",
            self.evaluated, self.config.repeats, self.config.seed
        ));
        out.push_str("delta    count     rate      chance(any-of-r)\n");
        for ((delta, count), (_, fp)) in self.counts.iter().zip(&self.fp_baselines) {
            out.push_str(&format!(
                "{:<8} {:<9} {:<9.4} {:<9.4}\n",
                delta,
                count,
                *count as f64 / self.evaluated as f64,
                fp
            ));
        }
        out
    }

    /// One CSV row per image: trials are semicolon-joined, rgb key components
    /// colon-joined.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
        let mut header = vec![
            "id".to_string(),
            "true_key".to_string(),
            "predicted_keys".to_string(),
            "distances".to_string(),
            "min_distance".to_string(),
        ];
        for delta in self.config.thresholds.deltas() {
            header.push(format!("memorized_at_{delta}"));
        }
        w.write_record(&header)
            .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
        for row in &self.rows {
            let mut record = vec![
                row.id.clone(),
                format_key(&row.true_key),
                row.trials
                    .iter()
                    .map(|t| format_key(&t.predicted))
                    .collect::<Vec<_>>()
                    .join(";"),
                row.trials
                    .iter()
                    .map(|t| t.distance.to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
                row.min_distance.to_string(),
            ];
            for delta in self.config.thresholds.deltas() {
                record.push((row.min_distance <= *delta).to_string());
            }
            w.write_record(&record)
                .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
        }
        w.flush()
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Structured summary (JSON) without the per-image rows.
    pub fn write_summary(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            config: &'a EvalConfig,
            evaluated: usize,
            counts: &'a [(f64, usize)],
            fp_baselines: &'a [(f64, f64)],
        }
        let text = serde_json::to_string_pretty(&Summary {
            config: &self.config,
            evaluated: self.evaluated,
            counts: &self.counts,
            fp_baselines: &self.fp_baselines,
        })
        .expect("summary serializes");
        let mut f = std::fs::File::create(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(text.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn format_key(key: &Key) -> String {
    key.components()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(":")
}

/// Deterministically sample the evaluation subset: seeded shuffle of item
/// indices, first `n`, then ordered by id.
pub fn sample_subset<'a>(
    dataset: &'a CaptionedDataset,
    n: usize,
    seed: u64,
) -> Result<Vec<&'a DatasetItem>> {
    if n > dataset.len() {
        return Err(Error::Config(format!(
            "subset size {n} exceeds dataset size {}",
            dataset.len()
        )));
    }
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut stream = rng::stream(seed, &["subset"]);
    indices.shuffle(&mut stream);
    indices.truncate(n);
    let mut items: Vec<&DatasetItem> = indices.into_iter().map(|i| &dataset.items[i]).collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(items)
}

/// Evaluate a model over a deterministic subset of the dataset.
///
/// All `repeats` trials run for every image (flags per threshold derive from
/// the recorded distances, which matches the early-return counting exactly),
/// and per-image work is parallelized with a deterministic ordered reduction.
pub fn evaluate_model(
    model: &dyn QueryModel,
    dataset: &CaptionedDataset,
    config: &EvalConfig,
) -> Result<MemorizationReport> {
    config.validate()?;
    let keymap = dataset.require_keymap()?;
    let items = sample_subset(dataset, config.subset_size, config.seed)?;

    let rows: Vec<ImageRow> = items
        .par_iter()
        .map(|item| {
            let (true_key, trials) = run_trials(
                model,
                item,
                keymap,
                &config.pattern,
                config.repeats,
                config.seed,
                None,
            )?;
            let min_distance = trials
                .iter()
                .map(|t| t.distance)
                .fold(f64::INFINITY, f64::min);
            Ok(ImageRow {
                id: item.id.clone(),
                true_key,
                trials,
                min_distance,
            })
        })
        .collect::<Result<_>>()?;

    let counts = config
        .thresholds
        .deltas()
        .iter()
        .map(|&d| (d, rows.iter().filter(|r| r.min_distance <= d).count()))
        .collect();
    let fp_baselines = config
        .thresholds
        .deltas()
        .iter()
        .map(|&d| (d, fp_rate_any_of_grid(d, config.repeats)))
        .collect();

    Ok(MemorizationReport {
        config: config.clone(),
        evaluated: rows.len(),
        rows,
        counts,
        fp_baselines,
    })
}
