//! Experiment harnesses: duplication, augmentation robustness, mitigation
//! re-evaluation, and the pattern ablations. Each harness stores raw counts
//! so every derived percentage is recomputable.

use super::calibration::fp_rate_any_of_grid;
use super::mitigation::Mitigation;
use super::{ArmStatus, ExperimentArm, ExperimentRun};
use crate::diffusion::{train, Checkpoint, Denoiser, SubSchedule, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_model, trial_seed, CondSource, DiffusionQueryModel, EvalConfig, OutpaintQuery,
    QueryModel, Variant,
};
use crate::imgdata::{
    assign_keys, augment_dataset, augment_query, build_pattern_mask, inject_duplicates,
    AugmentedImage, CaptionedDataset, ColorMode, PatternSpec, QueryTransform,
};
use crate::metrics::key_distance;
use crate::rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde_json::json;

/// A trained denoiser plus its sampling stride, as consumed by the
/// evaluation-only studies.
pub struct StudyModel<'a> {
    pub denoiser: &'a dyn Denoiser,
    pub sub: SubSchedule,
}

impl StudyModel<'_> {
    fn query_model<'b>(
        &'b self,
        eval: &EvalConfig,
        conditioning: CondSource<'b>,
    ) -> DiffusionQueryModel<'b> {
        DiffusionQueryModel {
            denoiser: self.denoiser,
            sub: self.sub.clone(),
            config: eval.outpaint,
            variant: Variant::Pixel,
            conditioning,
        }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DuplicationLevel {
    /// Total instances per original (1 = not duplicated).
    pub instances: usize,
    /// Number of originals evaluated at this level.
    pub group_size: usize,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DuplicationStudyConfig {
    pub levels: Vec<DuplicationLevel>,
    pub independent_keys: bool,
}

/// Disjoint original-id groups per duplication level, drawn deterministically.
pub struct DuplicationPlan {
    /// `(instances, original ids)` per level, ascending by instances.
    pub groups: Vec<(usize, Vec<String>)>,
    /// The base dataset extended with the injected duplicates.
    pub dataset: CaptionedDataset,
}

pub fn plan_duplication(
    base: &CaptionedDataset,
    config: &DuplicationStudyConfig,
    seed: u64,
) -> Result<DuplicationPlan> {
    base.require_keymap()?;
    let needed: usize = config.levels.iter().map(|l| l.group_size).sum();
    if needed > base.len() {
        return Err(Error::Config(format!(
            "duplication groups need {needed} originals, dataset has {}",
            base.len()
        )));
    }
    let mut ids: Vec<String> = base.items.iter().map(|it| it.id.clone()).collect();
    let mut stream = rng::stream(seed, &["dup-plan"]);
    ids.shuffle(&mut stream);

    let mut groups = Vec::new();
    let mut cursor = 0usize;
    let mut dup_ids = Vec::new();
    let mut dup_counts = Vec::new();
    let mut levels = config.levels.clone();
    levels.sort_by_key(|l| l.instances);
    for level in &levels {
        let group: Vec<String> = ids[cursor..cursor + level.group_size].to_vec();
        cursor += level.group_size;
        if level.instances >= 2 {
            for id in &group {
                dup_ids.push(id.clone());
                dup_counts.push(level.instances);
            }
        }
        groups.push((level.instances, group));
    }
    let dataset = if dup_ids.is_empty() {
        base.clone()
    } else {
        inject_duplicates(base, &dup_ids, &dup_counts, config.independent_keys)?
    };
    Ok(DuplicationPlan { groups, dataset })
}

/// Evaluate per-level memorization fractions on a trained model: an original
/// counts as memorized at `delta` when any of its instances' keys is flagged.
pub fn duplication_arms(
    model: &dyn QueryModel,
    augmented: &CaptionedDataset,
    groups: &[(usize, Vec<String>)],
    eval: &EvalConfig,
) -> Result<Vec<ExperimentArm>> {
    let keymap = augmented.require_keymap()?;
    let mut arms = Vec::new();
    for (instances, originals) in groups {
        // Gather every instance of every original in this group.
        let queries: Vec<(&str, Vec<&crate::imgdata::DatasetItem>)> = originals
            .iter()
            .map(|orig| {
                let items: Vec<_> = augmented
                    .items
                    .iter()
                    .filter(|it| it.origin() == orig)
                    .collect();
                (orig.as_str(), items)
            })
            .collect();

        let min_distances: Vec<Vec<f64>> = queries
            .par_iter()
            .map(|(_, items)| {
                items
                    .iter()
                    .map(|item| {
                        let mask = build_pattern_mask(
                            &eval.pattern,
                            item.image.height,
                            item.image.width,
                        )?;
                        let canvas = crate::eval::query_canvas(&item.image, &mask);
                        let true_key = *keymap.key_for(&item.id)?;
                        let mut best = f64::INFINITY;
                        for trial in 1..=eval.repeats {
                            let query = OutpaintQuery {
                                id: &item.id,
                                canvas: &canvas,
                                caption: &item.caption,
                                mask: &mask,
                                trial_seed: trial_seed(eval.seed, &item.id, trial),
                            };
                            let out = model.outpaint_query(&query)?;
                            let predicted = crate::outpaint::predicted_key(
                                &out,
                                &mask,
                                keymap.color_mode,
                            )?;
                            best = best.min(key_distance(&predicted, &true_key)?);
                        }
                        Ok(best)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;

        let counts: Vec<(f64, usize)> = eval
            .thresholds
            .deltas()
            .iter()
            .map(|&d| {
                let flagged = min_distances
                    .iter()
                    .filter(|dists| dists.iter().any(|x| *x <= d))
                    .count();
                (d, flagged)
            })
            .collect();
        let chance: Vec<(f64, f64)> = eval
            .thresholds
            .deltas()
            .iter()
            .map(|&d| (d, fp_rate_any_of_grid(d, instances * eval.repeats)))
            .collect();
        arms.push(ExperimentArm {
            name: format!("x{instances}"),
            params: json!({ "instances": instances, "group_size": originals.len() }),
            n: originals.len(),
            counts,
            chance,
            pct_change: None,
            extra: serde_json::Value::Null,
            status: ArmStatus::Ok,
        });
    }
    Ok(arms)
}

/// Full duplication study: inject duplicates, train one model on the
/// duplicated dataset, report per-level memorization fractions.
pub fn run_duplication_study(
    base: &CaptionedDataset,
    config: &DuplicationStudyConfig,
    train_config: &TrainConfig,
    eval: &EvalConfig,
) -> Result<(ExperimentRun, Checkpoint)> {
    let plan = plan_duplication(base, config, eval.seed)?;
    let augmented = augment_dataset(&plan.dataset, &eval.pattern)?;
    let checkpoint = train(&augmented, train_config)?;
    let sub = checkpoint.schedule.strided(eval.outpaint.steps)?;
    let model = DiffusionQueryModel {
        denoiser: &checkpoint.model,
        sub,
        config: eval.outpaint,
        variant: Variant::Pixel,
        conditioning: CondSource::Caption,
    };
    let arms = duplication_arms(&model, &augmented, &plan.groups, eval)?;
    let run = ExperimentRun {
        name: "duplication".into(),
        seed: eval.seed,
        config: json!({ "study": config, "train": train_config, "eval": eval }),
        arms,
    };
    Ok((run, checkpoint))
}

/// Rebuild a dataset with every query interior transformed (the pattern
/// region is reapplied by the transform).
pub fn transformed_dataset(
    augmented: &CaptionedDataset,
    spec: &PatternSpec,
    transform: &QueryTransform,
    seed: u64,
) -> Result<CaptionedDataset> {
    let keymap = augmented.require_keymap()?.clone();
    let mut out = augmented.clone();
    for item in &mut out.items {
        let key = *keymap.key_for(&item.id)?;
        let aug = AugmentedImage {
            image: item.image.clone(),
            spec: *spec,
            key,
        };
        let t_seed = rng::sub_seed(seed, &["qaug", &item.id]);
        item.image = augment_query(&aug, transform, t_seed)?.image;
    }
    Ok(out)
}

/// Per-transform eidetic counts with percent change against the identity arm.
/// Query augmentation touches the interior only; pattern pixels stay put.
pub fn run_augmentation_study(
    model: &dyn QueryModel,
    augmented: &CaptionedDataset,
    eval: &EvalConfig,
    transforms: &[QueryTransform],
) -> Result<ExperimentRun> {
    for t in transforms {
        t.validate()?;
    }
    let mut arms = Vec::new();
    let baseline_name = QueryTransform::Identity.label();
    let mut all: Vec<QueryTransform> = vec![QueryTransform::Identity];
    all.extend_from_slice(transforms);
    for transform in &all {
        let ds = if matches!(transform, QueryTransform::Identity) {
            augmented.clone()
        } else {
            transformed_dataset(augmented, &eval.pattern, transform, eval.seed)?
        };
        let report = evaluate_model(model, &ds, eval)?;
        arms.push(ExperimentArm {
            name: transform.label(),
            params: serde_json::to_value(transform).expect("transform serializes"),
            n: report.evaluated,
            counts: report.counts.clone(),
            chance: report.fp_baselines.clone(),
            pct_change: None,
            extra: serde_json::Value::Null,
            status: ArmStatus::Ok,
        });
    }
    let mut run = ExperimentRun {
        name: "augmentation".into(),
        seed: eval.seed,
        config: json!({ "eval": eval, "transforms": transforms }),
        arms,
    };
    run.derive_changes(&baseline_name);
    Ok(run)
}

/// Re-evaluate inference-time mitigation methods: GNI on the embedding,
/// caption rewrites for RT/CWR/RNA. The baseline arm uses the training
/// caption verbatim; all arms share subset and trial seeds.
pub fn run_mitigation_study(
    study: &StudyModel<'_>,
    augmented: &CaptionedDataset,
    eval: &EvalConfig,
    methods: &[Mitigation],
) -> Result<ExperimentRun> {
    for m in methods {
        m.validate()?;
    }
    let mut arms = Vec::new();

    let baseline = study.query_model(eval, CondSource::Caption);
    let report = evaluate_model(&baseline, augmented, eval)?;
    arms.push(ExperimentArm {
        name: "baseline".into(),
        params: serde_json::Value::Null,
        n: report.evaluated,
        counts: report.counts.clone(),
        chance: report.fp_baselines.clone(),
        pct_change: None,
        extra: serde_json::Value::Null,
        status: ArmStatus::Ok,
    });

    let seed = eval.seed;
    for method in methods {
        let cond_fn = move |q: &OutpaintQuery<'_>| Ok(Some(method.condition(q, seed)?));
        let model = study.query_model(eval, CondSource::Custom(&cond_fn));
        let arm = match evaluate_model(&model, augmented, eval) {
            Ok(report) => ExperimentArm {
                name: method.label(),
                params: serde_json::to_value(method).expect("method serializes"),
                n: report.evaluated,
                counts: report.counts.clone(),
                chance: report.fp_baselines.clone(),
                pct_change: None,
                extra: serde_json::Value::Null,
                status: ArmStatus::Ok,
            },
            Err(e) => ExperimentArm {
                name: method.label(),
                params: serde_json::to_value(method).expect("method serializes"),
                n: 0,
                counts: Vec::new(),
                chance: Vec::new(),
                pct_change: None,
                extra: serde_json::Value::Null,
                status: ArmStatus::Failed(e.to_string()),
            },
        };
        arms.push(arm);
    }
    let mut run = ExperimentRun {
        name: "mitigation".into(),
        seed: eval.seed,
        config: json!({ "eval": eval, "methods": methods }),
        arms,
    };
    run.derive_changes("baseline");
    Ok(run)
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AblationKind {
    /// One model per border thickness.
    Thickness { values: Vec<usize> },
    /// Border frame vs centered patch at one thickness.
    Placement { thickness: usize },
    /// Grayscale vs rgb keys; the rgb arm also reports the mean
    /// inter-channel spread of predicted borders (the collapse diagnostic).
    Color { thickness: usize },
}

/// Train one model per configuration and evaluate each; a failing arm is
/// marked failed and the remaining arms still complete.
pub fn run_ablation(
    kind: &AblationKind,
    base: &CaptionedDataset,
    train_config: &TrainConfig,
    eval: &EvalConfig,
) -> Result<ExperimentRun> {
    let specs: Vec<(String, PatternSpec, ColorMode)> = match kind {
        AblationKind::Thickness { values } => {
            if values.is_empty() {
                return Err(Error::Config("thickness ablation needs values".into()));
            }
            let mut sorted = values.clone();
            sorted.sort_unstable();
            sorted
                .iter()
                .map(|&p| {
                    (
                        format!("p{p}"),
                        PatternSpec::border(p, eval.pattern.color_mode),
                        eval.pattern.color_mode,
                    )
                })
                .collect()
        }
        AblationKind::Placement { thickness } => vec![
            (
                "border".into(),
                PatternSpec::border(*thickness, eval.pattern.color_mode),
                eval.pattern.color_mode,
            ),
            (
                "center".into(),
                PatternSpec::center(*thickness, eval.pattern.color_mode),
                eval.pattern.color_mode,
            ),
        ],
        AblationKind::Color { thickness } => vec![
            (
                "grayscale".into(),
                PatternSpec::border(*thickness, ColorMode::Grayscale),
                ColorMode::Grayscale,
            ),
            (
                "rgb".into(),
                PatternSpec::border(*thickness, ColorMode::Rgb),
                ColorMode::Rgb,
            ),
        ],
    };

    let mut arms = Vec::new();
    for (name, spec, color_mode) in &specs {
        let arm = run_ablation_arm(name, spec, *color_mode, base, train_config, eval);
        arms.push(match arm {
            Ok(arm) => arm,
            Err(e) => ExperimentArm {
                name: name.clone(),
                params: serde_json::to_value(spec).expect("spec serializes"),
                n: 0,
                counts: Vec::new(),
                chance: Vec::new(),
                pct_change: None,
                extra: serde_json::Value::Null,
                status: ArmStatus::Failed(e.to_string()),
            },
        });
    }
    Ok(ExperimentRun {
        name: "ablation".into(),
        seed: eval.seed,
        config: json!({ "kind": kind, "train": train_config, "eval": eval }),
        arms,
    })
}

fn run_ablation_arm(
    name: &str,
    spec: &PatternSpec,
    color_mode: ColorMode,
    base: &CaptionedDataset,
    train_config: &TrainConfig,
    eval: &EvalConfig,
) -> Result<ExperimentArm> {
    let mut dataset = base.clone();
    let keymap = base.require_keymap()?;
    if keymap.color_mode != color_mode {
        dataset.keymap = Some(assign_keys(&dataset, keymap.seed, color_mode)?);
    }
    let augmented = augment_dataset(&dataset, spec)?;
    let checkpoint = train(&augmented, train_config)?;
    let sub = checkpoint.schedule.strided(eval.outpaint.steps)?;
    let model = DiffusionQueryModel {
        denoiser: &checkpoint.model,
        sub,
        config: eval.outpaint,
        variant: Variant::Pixel,
        conditioning: CondSource::Caption,
    };
    let mut arm_eval = eval.clone();
    arm_eval.pattern = *spec;
    let report = evaluate_model(&model, &augmented, &arm_eval)?;

    // Collapse diagnostic: mean inter-channel spread of predicted borders.
    let spread = if color_mode == ColorMode::Rgb {
        let mut total = 0.0f64;
        let mut count = 0usize;
        for row in &report.rows {
            for trial in &row.trials {
                let comps = trial.predicted.components();
                let max = comps.iter().cloned().fold(f32::MIN, f32::max) as f64;
                let min = comps.iter().cloned().fold(f32::MAX, f32::min) as f64;
                total += max - min;
                count += 1;
            }
        }
        Some(total / count.max(1) as f64)
    } else {
        None
    };

    Ok(ExperimentArm {
        name: name.to_string(),
        params: serde_json::to_value(spec).expect("spec serializes"),
        n: report.evaluated,
        counts: report.counts.clone(),
        chance: report.fp_baselines.clone(),
        pct_change: None,
        extra: match spread {
            Some(s) => json!({ "mean_channel_spread": s }),
            None => serde_json::Value::Null,
        },
        status: ArmStatus::Ok,
    })
}
