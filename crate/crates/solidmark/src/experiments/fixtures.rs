//! Constructed fixtures demonstrating scoring pathologies.

use crate::error::Result;
use crate::imgdata::{snap_to_grid, Image};
use crate::metrics::{
    count_eidetic, modified_l2, patched_modified_l2, score_percentile, PatchAggregation,
};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

/// Two similarity distributions with identical 95th percentiles but different
/// 96th percentiles and different eidetic counts: percentile scoring misses a
/// reduction that eidetic counting sees.
#[derive(Debug, Clone, Serialize)]
pub struct PathologyFixture {
    pub sims_a: Vec<f64>,
    pub sims_b: Vec<f64>,
    pub p95_a: f64,
    pub p95_b: f64,
    pub p96_a: f64,
    pub p96_b: f64,
    /// Eidetic threshold on distances `1 - sim` where the counts differ.
    pub delta: f64,
    pub count_a: usize,
    pub count_b: usize,
}

pub fn percentile_pathology_fixture(seed: u64) -> Result<PathologyFixture> {
    // Base distribution: 100 similarities 0.01..=1.00. Variant b pulls the
    // 96th..99th values down to just above the shared 95th percentile,
    // modeling a mitigation that trimmed the extreme tail.
    let mut sims_a: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
    let mut sims_b = sims_a.clone();
    for (k, v) in [0.9505, 0.9510, 0.9515, 0.9520].into_iter().enumerate() {
        sims_b[95 + k] = v; // replaces 0.96, 0.97, 0.98, 0.99
    }

    // Presentation order is irrelevant to every scoring strategy; shuffle to
    // prove it.
    let mut stream = rng::stream(seed, &["pathology"]);
    sims_a.shuffle(&mut stream);
    sims_b.shuffle(&mut stream);

    let delta = 0.045;
    let dist = |sims: &[f64]| -> Vec<f64> { sims.iter().map(|s| 1.0 - s).collect() };
    let fixture = PathologyFixture {
        p95_a: score_percentile(&sims_a, 0.95)?,
        p95_b: score_percentile(&sims_b, 0.95)?,
        p96_a: score_percentile(&sims_a, 0.96)?,
        p96_b: score_percentile(&sims_b, 0.96)?,
        delta,
        count_a: count_eidetic(&dist(&sims_a), delta),
        count_b: count_eidetic(&dist(&sims_b), delta),
        sims_a,
        sims_b,
    };
    debug_assert_eq!(fixture.p95_a, fixture.p95_b);
    debug_assert_ne!(fixture.p96_a, fixture.p96_b);
    debug_assert_ne!(fixture.count_a, fixture.count_b);
    Ok(fixture)
}

/// A dataset with a dense monochromatic cluster plus textured images, and two
/// non-memorized generations: the monochromatic one scores a smaller
/// (more memorized-looking) rescaled nearest-neighbor distance than the
/// textured one, despite neither being a memorization.
#[derive(Debug, Clone)]
pub struct MonochromeBiasFixture {
    pub dataset: Vec<(String, Image)>,
    pub gen_mono: Image,
    pub gen_textured: Image,
    pub l2bar_mono: f64,
    pub l2bar_textured: f64,
    pub patched_mono: f64,
    pub patched_textured: f64,
    pub min_l2_mono: f64,
    pub min_l2_textured: f64,
}

fn solid(value: f32, jitter_seed: u64, side: usize) -> Image {
    let mut stream = rng::stream(jitter_seed, &["solid"]);
    let pixels = (0..side * side)
        .map(|_| snap_to_grid((value + stream.gen_range(-0.004..0.004)).clamp(0.0, 1.0)))
        .collect();
    Image::new(side, side, 1, pixels).unwrap()
}

fn texture(kind: u64, side: usize) -> Image {
    let mut stream = rng::stream(kind, &["texture"]);
    let scale = stream.gen_range(2usize..5);
    let phase = stream.gen_range(0usize..scale);
    let dark: f32 = stream.gen_range(0.05..0.25);
    let light: f32 = stream.gen_range(0.7..0.95);
    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let checker = ((x / scale + y / scale + phase) % 2) == 0;
            let noise = stream.gen_range(-0.02..0.02);
            pixels.push(snap_to_grid(
                (if checker { light } else { dark } + noise).clamp(0.0, 1.0),
            ));
        }
    }
    Image::new(side, side, 1, pixels).unwrap()
}

pub fn monochrome_bias_fixture(seed: u64) -> Result<MonochromeBiasFixture> {
    let side = 16;
    // Dense gray ladder: nearest neighbors of a mono generation are close,
    // but so is the whole cluster.
    let mono_values = [0.42f32, 0.45, 0.48, 0.51, 0.54, 0.57, 0.60];
    let mut dataset: Vec<(String, Image)> = mono_values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            (
                format!("mono{i:02}"),
                solid(*v, seed.wrapping_add(i as u64), side),
            )
        })
        .collect();
    for i in 0..7u64 {
        dataset.push((format!("tex{i:02}"), texture(seed.wrapping_add(100 + i), side)));
    }

    // A fresh solid gray between two ladder rungs: not a memorization, yet
    // close to many training images at once.
    let gen_mono = solid(0.495, seed.wrapping_add(999), side);
    // A fresh texture pattern unlike any in the set.
    let gen_textured = {
        let mut stream = rng::stream(seed.wrapping_add(777), &["gen-texture"]);
        let mut pixels = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                let stripe = ((2 * x + y) / 3) % 2 == 0;
                let noise = stream.gen_range(-0.02..0.02f32);
                pixels.push(snap_to_grid(
                    (if stripe { 0.85 } else { 0.15 } + noise).clamp(0.0, 1.0),
                ));
            }
        }
        Image::new(side, side, 1, pixels).unwrap()
    };

    let (n, alpha) = (5, 0.5);
    let l2bar_mono = modified_l2(&gen_mono, &dataset, n, alpha)?;
    let l2bar_textured = modified_l2(&gen_textured, &dataset, n, alpha)?;
    let patched_mono = patched_modified_l2(
        &gen_mono,
        &dataset,
        4,
        n,
        alpha,
        PatchAggregation::MaxOverGenMinOverTrain,
    )?;
    let patched_textured = patched_modified_l2(
        &gen_textured,
        &dataset,
        4,
        n,
        alpha,
        PatchAggregation::MaxOverGenMinOverTrain,
    )?;

    let min_l2 = |gen: &Image| -> Result<f64> {
        let mut best = f64::INFINITY;
        for (_, img) in &dataset {
            best = best.min(crate::metrics::l2_normalized(gen, img)?);
        }
        Ok(best)
    };
    Ok(MonochromeBiasFixture {
        min_l2_mono: min_l2(&gen_mono)?,
        min_l2_textured: min_l2(&gen_textured)?,
        dataset,
        gen_mono,
        gen_textured,
        l2bar_mono,
        l2bar_textured,
        patched_mono,
        patched_textured,
    })
}
