use super::{dump_config, ensure_dir, log_line};
use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use solidmark::diffusion::{load_checkpoint, TrainConfig};
use solidmark::eval::{evaluate_model, EvalConfig};
use solidmark::experiments::{
    fp_rate_grid, monochrome_bias_fixture, percentile_pathology_fixture, run_ablation,
    run_augmentation_study, run_duplication_study, run_mitigation_study, AblationKind,
    DuplicationStudyConfig, Mitigation, OracleKind, OracleModel, StudyModel,
};
use solidmark::imgdata::{
    assign_keys, augment_dataset, gen_synthetic_dataset, load_dataset, save_image, ColorMode,
    PatternSpec, QueryTransform, SyntheticConfig,
};
use solidmark::metrics::ThresholdSet;
use solidmark::outpaint::OutpaintConfig;
use std::path::{Path, PathBuf};

/// Evaluation block shared by experiment config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSpec {
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    pub subset_size: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_thickness")]
    pub thickness: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_remask")]
    pub remask_period: usize,
}

fn default_deltas() -> Vec<f64> {
    vec![0.1, 0.05, 0.005]
}
fn default_repeats() -> usize {
    1
}
fn default_thickness() -> usize {
    4
}
fn default_steps() -> usize {
    50
}
fn default_remask() -> usize {
    10
}

impl EvalSpec {
    pub fn to_config(&self, color_mode: ColorMode) -> Result<EvalConfig> {
        Ok(EvalConfig {
            thresholds: ThresholdSet::new(self.deltas.clone())?,
            subset_size: self.subset_size,
            repeats: self.repeats,
            seed: self.seed,
            pattern: PatternSpec::border(self.thickness, color_mode),
            outpaint: OutpaintConfig {
                steps: self.steps,
                remask_period: self.remask_period,
                literal_noise_coef: false,
            },
        })
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

#[derive(Subcommand)]
pub enum ExperimentCmd {
    /// Train on a duplicated dataset and measure memorization per level.
    Duplication(DuplicationArgs),
    /// Query-augmentation robustness of a trained checkpoint.
    Augmentation(AugmentationArgs),
    /// Re-evaluate inference-time mitigation methods.
    Mitigation(MitigationArgs),
    /// Pattern ablations (thickness, placement, color), one model each.
    Ablation(AblationArgs),
    /// The percentile-scoring pathology fixture (no model needed).
    Pathology(FixtureArgs),
    /// The monochrome-bias fixture (no model needed).
    Monobias(FixtureArgs),
    /// Calibrate the false-positive floor with the unmemorized oracle.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DuplicationFileConfig {
    pub study: DuplicationStudyConfig,
    pub train: TrainConfig,
    pub eval: EvalSpec,
}

#[derive(Args)]
pub struct DuplicationArgs {
    /// Base dataset (keys assigned, not yet augmented).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the eval seed from the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentationFileConfig {
    pub transforms: Vec<QueryTransform>,
    pub eval: EvalSpec,
}

#[derive(Args)]
pub struct AugmentationArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// The augmented dataset the checkpoint was trained on.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigationFileConfig {
    pub methods: Vec<Mitigation>,
    pub eval: EvalSpec,
}

#[derive(Args)]
pub struct MitigationArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationFileConfig {
    pub kind: AblationKind,
    pub train: TrainConfig,
    pub eval: EvalSpec,
}

#[derive(Args)]
pub struct AblationArgs {
    /// Base dataset (keys assigned, not yet augmented).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "delta")]
    pub deltas: Vec<f64>,
}

pub fn run(cmd: ExperimentCmd) -> Result<()> {
    match cmd {
        ExperimentCmd::Duplication(args) => duplication(args),
        ExperimentCmd::Augmentation(args) => augmentation(args),
        ExperimentCmd::Mitigation(args) => mitigation(args),
        ExperimentCmd::Ablation(args) => ablation(args),
        ExperimentCmd::Pathology(args) => pathology(args),
        ExperimentCmd::Monobias(args) => monobias(args),
        ExperimentCmd::Calibrate(args) => calibrate(args),
    }
}

fn write_run(out: &Path, run: &solidmark::experiments::ExperimentRun) -> Result<()> {
    run.write_csv(&out.join("run.csv"))?;
    run.write_summary(&out.join("run.json"))?;
    for arm in &run.arms {
        let status = match &arm.status {
            solidmark::experiments::ArmStatus::Ok => "ok".to_string(),
            solidmark::experiments::ArmStatus::Failed(e) => format!("FAILED: {e}"),
        };
        println!("arm {:<12} n={:<5} {}", arm.name, arm.n, status);
        for (delta, count) in &arm.counts {
            println!("  delta {delta:<6} count {count}");
        }
    }
    Ok(())
}

fn duplication(args: DuplicationArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let mut config: DuplicationFileConfig = load_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.eval.seed = seed;
    }
    let base = load_dataset(&args.dataset)?;
    let color_mode = base.require_keymap()?.color_mode;
    let eval = config.eval.to_config(color_mode)?;
    log_line(&args.out, "duplication study started")?;
    let (mut run, checkpoint) =
        run_duplication_study(&base, &config.study, &config.train, &eval)?;
    run.derive_changes("x1");
    solidmark::diffusion::save_checkpoint(&checkpoint, &args.out.join("checkpoint.bin"))?;
    write_run(&args.out, &run)?;
    dump_config(&args.out, &config)?;
    log_line(&args.out, "duplication study complete")?;
    Ok(())
}

fn augmentation(args: AugmentationArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let mut config: AugmentationFileConfig = load_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.eval.seed = seed;
    }
    let dataset = load_dataset(&args.dataset)?;
    let color_mode = dataset.require_keymap()?.color_mode;
    let eval = config.eval.to_config(color_mode)?;
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let sub = checkpoint.schedule.strided(eval.outpaint.steps)?;
    let model = solidmark::eval::DiffusionQueryModel {
        denoiser: &checkpoint.model,
        sub,
        config: eval.outpaint,
        variant: solidmark::eval::Variant::Pixel,
        conditioning: if checkpoint.config.conditional {
            solidmark::eval::CondSource::Caption
        } else {
            solidmark::eval::CondSource::Unconditional
        },
    };
    log_line(&args.out, "augmentation study started")?;
    let run = run_augmentation_study(&model, &dataset, &eval, &config.transforms)?;
    write_run(&args.out, &run)?;
    dump_config(&args.out, &config)?;
    log_line(&args.out, "augmentation study complete")?;
    Ok(())
}

fn mitigation(args: MitigationArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let mut config: MitigationFileConfig = load_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.eval.seed = seed;
    }
    let dataset = load_dataset(&args.dataset)?;
    let color_mode = dataset.require_keymap()?.color_mode;
    let eval = config.eval.to_config(color_mode)?;
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let study = StudyModel {
        denoiser: &checkpoint.model,
        sub: checkpoint.schedule.strided(eval.outpaint.steps)?,
    };
    log_line(&args.out, "mitigation study started")?;
    let run = run_mitigation_study(&study, &dataset, &eval, &config.methods)?;
    write_run(&args.out, &run)?;
    dump_config(&args.out, &config)?;
    log_line(&args.out, "mitigation study complete")?;
    Ok(())
}

fn ablation(args: AblationArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let mut config: AblationFileConfig = load_json(&args.config)?;
    if let Some(seed) = args.seed {
        config.eval.seed = seed;
    }
    let base = load_dataset(&args.dataset)?;
    let color_mode = base.require_keymap()?.color_mode;
    let eval = config.eval.to_config(color_mode)?;
    log_line(&args.out, "ablation started")?;
    let run = run_ablation(&config.kind, &base, &config.train, &eval)?;
    write_run(&args.out, &run)?;
    dump_config(&args.out, &config)?;
    log_line(&args.out, "ablation complete")?;
    Ok(())
}

fn pathology(args: FixtureArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let fixture = percentile_pathology_fixture(args.seed)?;
    std::fs::write(
        args.out.join("pathology.json"),
        serde_json::to_string_pretty(&fixture)?,
    )?;
    dump_config(&args.out, &serde_json::json!({ "seed": args.seed }))?;
    println!(
        "95th percentile: {} vs {} (equal); 96th: {} vs {}; eidetic counts at delta {}: {} vs {}",
        fixture.p95_a,
        fixture.p95_b,
        fixture.p96_a,
        fixture.p96_b,
        fixture.delta,
        fixture.count_a,
        fixture.count_b
    );
    log_line(&args.out, "pathology fixture written")?;
    Ok(())
}

fn monobias(args: FixtureArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let fixture = monochrome_bias_fixture(args.seed)?;
    let images_dir = args.out.join("images");
    ensure_dir(&images_dir)?;
    for (id, image) in &fixture.dataset {
        save_image(image, &images_dir.join(format!("{id}.png")))?;
    }
    save_image(&fixture.gen_mono, &images_dir.join("gen_mono.png"))?;
    save_image(&fixture.gen_textured, &images_dir.join("gen_textured.png"))?;
    let summary = serde_json::json!({
        "seed": args.seed,
        "l2bar_mono": fixture.l2bar_mono,
        "l2bar_textured": fixture.l2bar_textured,
        "patched_mono": fixture.patched_mono,
        "patched_textured": fixture.patched_textured,
        "min_l2_mono": fixture.min_l2_mono,
        "min_l2_textured": fixture.min_l2_textured,
        "bias_reproduced": fixture.l2bar_mono < fixture.l2bar_textured,
    });
    std::fs::write(
        args.out.join("monobias.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    dump_config(&args.out, &serde_json::json!({ "seed": args.seed }))?;
    println!(
        "rescaled nn distance: monochromatic {} < textured {} -> bias reproduced: {}",
        fixture.l2bar_mono,
        fixture.l2bar_textured,
        fixture.l2bar_mono < fixture.l2bar_textured
    );
    log_line(&args.out, "monobias fixture written")?;
    Ok(())
}

fn calibrate(args: CalibrateArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let deltas = if args.deltas.is_empty() {
        default_deltas()
    } else {
        args.deltas.clone()
    };
    let mut dataset = gen_synthetic_dataset(&SyntheticConfig {
        count: args.queries,
        base_size: 12,
        num_classes: 3,
        seed: args.seed,
    })?;
    dataset.keymap = Some(assign_keys(&dataset, args.seed, ColorMode::Grayscale)?);
    let spec = PatternSpec::border(2, ColorMode::Grayscale);
    let augmented = augment_dataset(&dataset, &spec)?;
    let oracle = OracleModel::new(
        OracleKind::Unmemorized,
        std::iter::empty(),
        augmented.keymap.clone().expect("keys assigned above"),
        spec,
        args.seed.wrapping_add(1),
    )?;
    let eval = EvalConfig {
        thresholds: ThresholdSet::new(deltas.clone())?,
        subset_size: args.queries,
        repeats: 1,
        seed: args.seed,
        pattern: spec,
        outpaint: OutpaintConfig {
            steps: 25,
            remask_period: 1,
            literal_noise_coef: false,
        },
    };
    log_line(&args.out, "calibration started")?;
    let report = evaluate_model(&oracle, &augmented, &eval)?;
    let mut rows = Vec::new();
    println!("delta    observed  expected  |z|");
    for (delta, count) in &report.counts {
        let observed = *count as f64 / args.queries as f64;
        let expected = fp_rate_grid(*delta);
        let se = (expected * (1.0 - expected) / args.queries as f64).sqrt();
        let z = (observed - expected).abs() / se;
        println!("{delta:<8} {observed:<9.5} {expected:<9.5} {z:.2}");
        rows.push(serde_json::json!({
            "delta": delta,
            "observed": observed,
            "expected": expected,
            "z": z,
        }));
    }
    std::fs::write(
        args.out.join("calibration.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "queries": args.queries,
            "seed": args.seed,
            "rows": rows,
        }))?,
    )?;
    report.write_csv(&args.out.join("report.csv"))?;
    dump_config(
        &args.out,
        &serde_json::json!({ "queries": args.queries, "seed": args.seed, "deltas": deltas }),
    )?;
    log_line(&args.out, "calibration complete")?;
    Ok(())
}
