//! Distance functions and scoring strategies.
//!
//! Pixel distances (normalized l2 and its nearest-neighbor rescaling), patched
//! variants, embedding similarities, the key distance used by outpainting
//! evaluation, and the three scoring strategies: percentile, maximum, eidetic
//! counting.
//!
//! Values are `f64`; distances are reported separately from similarities and
//! never mixed in one report column.

use crate::error::{Error, Result};
use crate::imgdata::{Image, Key};
use serde::{Deserialize, Serialize};


/// Normalized Euclidean distance: `sqrt(sum_i (a_i - b_i)^2 / d)`.
///
/// Bounded by 1 for inputs in `[0,1]`; symmetric; a metric.
pub fn l2_normalized(a: &Image, b: &Image) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::Dimension(format!(
            "l2 over {}x{}x{} vs {}x{}x{}",
            a.channels, a.height, a.width, b.channels, b.height, b.width
        )));
    }
    let d = a.len() as f64;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(x, y)| {
            let diff = (*x - *y) as f64;
            diff * diff
        })
        .sum();
    Ok((sum / d).sqrt())
}

/// How patch distances aggregate into one per-image-pair distance.
///
/// The literal reading takes the maximum l2 over all patch pairs; the matching
/// reading takes, for each generation patch, its best-matching training patch,
/// then the worst such match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchAggregation {
    MaxOverAllPairs,
    MaxOverGenMinOverTrain,
}

/// Base pixel metric for nearest-neighbor searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseMetric {
    L2Normalized,
    Patched {
        grid: usize,
        aggregation: PatchAggregation,
    },
}

impl BaseMetric {
    pub fn pair_distance(&self, a: &Image, b: &Image) -> Result<f64> {
        match self {
            BaseMetric::L2Normalized => l2_normalized(a, b),
            BaseMetric::Patched { grid, aggregation } => {
                patched_pair_distance(a, b, *grid, *aggregation)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseMetric::L2Normalized => "l2_normalized",
            BaseMetric::Patched { .. } => "patched_l2",
        }
    }
}

/// Split into a `grid x grid` array of patches, center-cropping to the largest
/// grid-divisible size first.
fn patches(image: &Image, grid: usize) -> Vec<Image> {
    let ph = (image.height / grid).max(1);
    let pw = (image.width / grid).max(1);
    let y0 = (image.height - ph * grid.min(image.height / ph)) / 2;
    let x0 = (image.width - pw * grid.min(image.width / pw)) / 2;
    let rows = grid.min(image.height / ph);
    let cols = grid.min(image.width / pw);
    let mut out = Vec::with_capacity(rows * cols);
    for gy in 0..rows {
        for gx in 0..cols {
            let mut patch = Image::zeros(ph, pw, image.channels);
            for c in 0..image.channels {
                for y in 0..ph {
                    for x in 0..pw {
                        patch.set(c, y, x, image.get(c, y0 + gy * ph + y, x0 + gx * pw + x));
                    }
                }
            }
            out.push(patch);
        }
    }
    out
}

fn patched_pair_distance(
    a: &Image,
    b: &Image,
    grid: usize,
    aggregation: PatchAggregation,
) -> Result<f64> {
    if !a.same_dims(b) {
        return Err(Error::Dimension("patched distance dims mismatch".into()));
    }
    if grid == 0 {
        return Err(Error::Config("patch grid must be positive".into()));
    }
    let pa = patches(a, grid);
    let pb = patches(b, grid);
    match aggregation {
        PatchAggregation::MaxOverAllPairs => {
            let mut best = 0.0f64;
            for x in &pa {
                for y in &pb {
                    best = best.max(l2_normalized(x, y)?);
                }
            }
            Ok(best)
        }
        PatchAggregation::MaxOverGenMinOverTrain => {
            let mut worst_match = 0.0f64;
            for x in &pa {
                let mut best = f64::INFINITY;
                for y in &pb {
                    best = best.min(l2_normalized(x, y)?);
                }
                worst_match = worst_match.max(best);
            }
            Ok(worst_match)
        }
    }
}

/// The `n` nearest training images to a generation, ascending, ties broken by
/// id order. Exact (non-approximate).
#[derive(Debug, Clone)]
pub struct NeighborSet {
    pub neighbors: Vec<(String, f64)>,
}

impl NeighborSet {
    pub fn nearest(&self) -> &(String, f64) {
        &self.neighbors[0]
    }

    pub fn mean_distance(&self) -> f64 {
        self.neighbors.iter().map(|(_, d)| d).sum::<f64>() / self.neighbors.len() as f64
    }
}

/// Exact n-nearest-neighbor search under the base metric.
pub fn nearest_neighbors(
    gen: &Image,
    dataset: &[(String, Image)],
    n: usize,
    base_metric: &BaseMetric,
) -> Result<NeighborSet> {
    if n == 0 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    if n > dataset.len() {
        return Err(Error::Config(format!(
            "n = {n} exceeds dataset size {}",
            dataset.len()
        )));
    }
    let mut all: Vec<(String, f64)> = dataset
        .iter()
        .map(|(id, img)| Ok((id.clone(), base_metric.pair_distance(gen, img)?)))
        .collect::<Result<_>>()?;
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(n);
    Ok(NeighborSet { neighbors: all })
}

/// Nearest-neighbor l2 rescaled by the mean distance to the n-NN set:
/// `l2(gen, nn) / (alpha * mean_{y in S} l2(gen, y))`, the set `S` including
/// the nearest neighbor itself.
pub fn modified_l2(gen: &Image, dataset: &[(String, Image)], n: usize, alpha: f64) -> Result<f64> {
    modified_l2_with(gen, dataset, n, alpha, &BaseMetric::L2Normalized)
}

/// The patched variant: pair distances are patch-aggregated before the same
/// nearest-neighbor rescaling.
pub fn patched_modified_l2(
    gen: &Image,
    dataset: &[(String, Image)],
    patch_grid: usize,
    n: usize,
    alpha: f64,
    aggregation: PatchAggregation,
) -> Result<f64> {
    modified_l2_with(
        gen,
        dataset,
        n,
        alpha,
        &BaseMetric::Patched {
            grid: patch_grid,
            aggregation,
        },
    )
}

pub fn modified_l2_with(
    gen: &Image,
    dataset: &[(String, Image)],
    n: usize,
    alpha: f64,
    base_metric: &BaseMetric,
) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::Config("alpha must be positive".into()));
    }
    let set = nearest_neighbors(gen, dataset, n, base_metric)?;
    let mean = set.mean_distance();
    if mean <= 0.0 {
        return Err(Error::Degenerate(
            "zero mean neighbor distance: generation exactly duplicates the neighbor set".into(),
        ));
    }
    Ok(set.nearest().1 / (alpha * mean))
}

/// Contract for embedding models: unit-norm vectors of a fixed dimension.
pub trait EmbeddingContract: Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, image: &Image) -> Result<Vec<f32>>;
}

/// Deterministic stand-in for a self-supervised descriptor: block-average to
/// 8x8 per channel, flatten, subtract the mean, normalize.
pub struct ToyEmbedder;

impl EmbeddingContract for ToyEmbedder {
    fn dimension(&self) -> usize {
        // Channel count is image-dependent; report the 3-channel case.
        3 * 64
    }

    fn embed(&self, image: &Image) -> Result<Vec<f32>> {
        let side = 8usize;
        let mut v = Vec::with_capacity(image.channels * side * side);
        for c in 0..image.channels {
            for by in 0..side {
                for bx in 0..side {
                    let y0 = by * image.height / side;
                    let y1 = ((by + 1) * image.height / side).max(y0 + 1);
                    let x0 = bx * image.width / side;
                    let x1 = ((bx + 1) * image.width / side).max(x0 + 1);
                    let mut acc = 0.0f64;
                    for y in y0..y1.min(image.height) {
                        for x in x0..x1.min(image.width) {
                            acc += image.get(c, y, x) as f64;
                        }
                    }
                    let count = (y1.min(image.height) - y0) * (x1.min(image.width) - x0);
                    v.push((acc / count as f64) as f32);
                }
            }
        }
        let mean = v.iter().sum::<f32>() / v.len() as f32;
        for x in &mut v {
            *x -= mean;
        }
        let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::Embedder(
                "degenerate embedding (constant image)".into(),
            ));
        }
        for x in &mut v {
            *x = (*x as f64 / norm) as f32;
        }
        Ok(v)
    }
}

/// Dot-product similarity of embeddings; in `[-1, 1]` for unit-norm vectors.
pub fn embedding_similarity(
    gen: &Image,
    train_image: &Image,
    embedder: &dyn EmbeddingContract,
) -> Result<f64> {
    let a = embedder.embed(gen)?;
    let b = embedder.embed(train_image)?;
    if a.len() != b.len() {
        return Err(Error::Embedder(format!(
            "embedding dims differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| *x as f64 * *y as f64)
        .sum();
    if !dot.is_finite() {
        return Err(Error::Embedder("non-finite similarity".into()));
    }
    Ok(dot)
}

/// Distance between a predicted and a true key: absolute difference in
/// grayscale mode, mean per-channel absolute difference in rgb mode.
pub fn key_distance(predicted: &Key, truth: &Key) -> Result<f64> {
    match (predicted, truth) {
        (Key::Gray(a), Key::Gray(b)) => Ok((*a as f64 - *b as f64).abs()),
        (Key::Rgb(a), Key::Rgb(b)) => Ok(a
            .iter()
            .zip(b)
            .map(|(x, y)| (*x as f64 - *y as f64).abs())
            .sum::<f64>()
            / 3.0),
        _ => Err(Error::Dimension(
            "key color modes differ (grayscale vs rgb)".into(),
        )),
    }
}

/// Nearest-rank percentile: the `ceil(q * N)`-th smallest value, no
/// interpolation.
pub fn score_percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("percentile of empty values".into()));
    }
    if !(0.0..=1.0).contains(&q) || q == 0.0 {
        return Err(Error::Domain(format!("quantile {q} outside (0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Exact maximum.
pub fn score_max(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("maximum of empty values".into()));
    }
    Ok(values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Number of distances at or below the threshold.
pub fn count_eidetic(distances: &[f64], delta: f64) -> usize {
    distances.iter().filter(|d| **d <= delta).count()
}

/// A descending list of eidetic thresholds, each in `(0,1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet(Vec<f64>);

impl ThresholdSet {
    pub fn new(mut deltas: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::Config("threshold set is empty".into()));
        }
        if deltas.iter().any(|d| !(0.0 < *d && *d < 1.0)) {
            return Err(Error::Config("thresholds must lie in (0,1)".into()));
        }
        deltas.sort_by(|a, b| b.total_cmp(a));
        deltas.dedup();
        Ok(ThresholdSet(deltas))
    }

    /// The set used throughout: {0.1, 0.05, 0.005}.
    pub fn standard() -> Self {
        ThresholdSet(vec![0.1, 0.05, 0.005])
    }

    pub fn deltas(&self) -> &[f64] {
        &self.0
    }
}

/// Whether a value series measures distance (low = memorized) or similarity
/// (high = memorized). Eidetic counting compares accordingly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Distance,
    Similarity,
}

/// One distance observation: a generation, its nearest training image, the
/// value and the metric that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub generation_id: String,
    pub nearest_training_id: String,
    pub value: f64,
    pub metric_name: String,
}

/// Aggregated scores for one metric over a sample of values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric_name: String,
    pub direction: Direction,
    pub sample_size: usize,
    pub percentile_95: f64,
    pub maximum: f64,
    /// `(delta, count)` pairs in descending delta order.
    pub eidetic_counts: Vec<(f64, usize)>,
}

impl ScoreReport {
    pub fn from_values(
        metric_name: &str,
        direction: Direction,
        values: &[f64],
        thresholds: &ThresholdSet,
    ) -> Result<Self> {
        let counts = thresholds
            .deltas()
            .iter()
            .map(|&d| {
                let count = match direction {
                    Direction::Distance => count_eidetic(values, d),
                    Direction::Similarity => values.iter().filter(|v| **v >= d).count(),
                };
                (d, count)
            })
            .collect();
        Ok(ScoreReport {
            metric_name: metric_name.to_string(),
            direction,
            sample_size: values.len(),
            percentile_95: score_percentile(values, 0.95)?,
            maximum: score_max(values)?,
            eidetic_counts: counts,
        })
    }
}
