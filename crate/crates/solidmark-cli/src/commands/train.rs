use super::{dump_config, ensure_dir, log_line};
use anyhow::{Context, Result};
use clap::Args;
use solidmark::diffusion::{load_checkpoint, resume, save_checkpoint, train, TrainConfig};
use solidmark::imgdata::load_dataset;
use std::path::PathBuf;

#[derive(Args)]
pub struct TrainArgs {
    /// Pattern-augmented dataset directory (keymap required).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for checkpoint.bin, run_report.json and config.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub learning_rate: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub timesteps: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub beta_start: f64,
    #[arg(long, default_value_t = 0.02)]
    pub beta_end: f64,
    /// Train without caption conditioning.
    #[arg(long)]
    pub unconditional: bool,
    #[arg(long, default_value_t = 12)]
    pub base_channels: usize,
    /// Continue from an existing checkpoint.bin in the output directory.
    #[arg(long)]
    pub resume: bool,
}

pub fn run(args: TrainArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let dataset = load_dataset(&args.dataset)?;
    // Keys must exist: training data without a keymap means the patterns
    // were never assigned.
    dataset.require_keymap()?;

    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        seed: args.seed,
        timesteps: args.timesteps,
        beta_start: args.beta_start,
        beta_end: args.beta_end,
        conditional: !args.unconditional,
        base_channels: args.base_channels,
    };

    let ckpt_path = args.out.join("checkpoint.bin");
    let checkpoint = if args.resume && ckpt_path.exists() {
        log_line(&args.out, "resuming from checkpoint")?;
        let mut ckpt = load_checkpoint(&ckpt_path)?;
        ckpt.config.epochs = config.epochs;
        resume(&mut ckpt, &dataset).context("resuming training")?;
        ckpt
    } else {
        log_line(&args.out, "training from scratch")?;
        train(&dataset, &config).context("training")?
    };

    save_checkpoint(&checkpoint, &ckpt_path)?;
    let report = checkpoint.report();
    let report_path = args.out.join("run_report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", report_path.display()))?;
    dump_config(&args.out, &config)?;
    log_line(&args.out, "training complete")?;
    println!(
        "trained {} steps, final loss {:?}; checkpoint at {}",
        checkpoint.completed_steps,
        report.final_loss,
        ckpt_path.display()
    );
    Ok(())
}
