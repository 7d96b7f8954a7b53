use super::{dump_config, ensure_dir, log_line};
use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use solidmark::diffusion::load_checkpoint;
use solidmark::eval::{evaluate_model, CondSource, DiffusionQueryModel, EvalConfig, Variant};
use solidmark::imgdata::load_dataset;
use solidmark::metrics::ThresholdSet;
use solidmark::outpaint::{IdentityAutoencoder, OutpaintConfig, QuantizingAutoencoder};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Pixel,
    Latent,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// The pattern-augmented dataset the model was trained on.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub subset_size: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Eidetic threshold; repeatable. Defaults to 0.1, 0.05, 0.005.
    #[arg(long = "delta")]
    pub deltas: Vec<f64>,
    #[arg(long, value_enum, default_value_t = VariantArg::Pixel)]
    pub variant: VariantArg,
    /// Remask period for the latent variant.
    #[arg(long, default_value_t = 10)]
    pub remask_period: usize,
    /// Ancestral sampling steps per outpainting query.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Use a lossy quantizing autoencoder with this many levels instead of
    /// the identity autoencoder (latent variant only).
    #[arg(long)]
    pub quantize_levels: Option<u32>,
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let dataset = load_dataset(&args.dataset)?;
    let keymap = dataset.require_keymap()?;
    let checkpoint = load_checkpoint(&args.checkpoint)?;

    let pattern = dataset
        .meta
        .pattern
        .ok_or_else(|| anyhow::anyhow!("dataset manifest carries no pattern; augment it first"))?;
    anyhow::ensure!(
        pattern.color_mode == keymap.color_mode,
        "pattern color mode {:?} does not match keymap {:?}",
        pattern.color_mode,
        keymap.color_mode
    );

    let thresholds = if args.deltas.is_empty() {
        ThresholdSet::standard()
    } else {
        ThresholdSet::new(args.deltas.clone())?
    };
    let config = EvalConfig {
        thresholds,
        subset_size: args.subset_size,
        repeats: args.repeats,
        seed: args.seed,
        pattern,
        outpaint: OutpaintConfig {
            steps: args.steps,
            remask_period: args.remask_period,
            literal_noise_coef: false,
        },
    };

    let sub = checkpoint.schedule.strided(args.steps)?;
    let identity = IdentityAutoencoder;
    let quantizing = args.quantize_levels.map(|levels| QuantizingAutoencoder { levels });
    let variant = match args.variant {
        VariantArg::Pixel => Variant::Pixel,
        VariantArg::Latent => Variant::Latent {
            autoencoder: match &quantizing {
                Some(q) => q,
                None => &identity,
            },
        },
    };
    let model = DiffusionQueryModel {
        denoiser: &checkpoint.model,
        sub,
        config: config.outpaint,
        variant,
        conditioning: if checkpoint.config.conditional {
            CondSource::Caption
        } else {
            CondSource::Unconditional
        },
    };

    log_line(&args.out, "evaluation started")?;
    let report = evaluate_model(&model, &dataset, &config).context("evaluating")?;
    report.write_csv(&args.out.join("report.csv"))?;
    report.write_summary(&args.out.join("summary.json"))?;
    dump_config(&args.out, &config)?;
    log_line(&args.out, "evaluation complete")?;
    print!("{}", report.render_text());
    Ok(())
}
