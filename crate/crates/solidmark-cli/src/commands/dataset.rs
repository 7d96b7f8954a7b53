use super::{dump_config, ensure_dir, log_line};
use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use solidmark::imgdata::{
    assign_keys, augment_dataset, gen_synthetic_dataset, inject_duplicates, load_dataset,
    save_dataset, ColorMode, PatternSpec, Placement, SyntheticConfig,
};
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ColorModeArg {
    Grayscale,
    Rgb,
}

impl From<ColorModeArg> for ColorMode {
    fn from(v: ColorModeArg) -> Self {
        match v {
            ColorModeArg::Grayscale => ColorMode::Grayscale,
            ColorModeArg::Rgb => ColorMode::Rgb,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlacementArg {
    Border,
    Center,
}

#[derive(Subcommand)]
pub enum DatasetCmd {
    /// Generate a synthetic captioned dataset with keys assigned.
    Generate(GenerateArgs),
    /// Stamp every image with its key pattern.
    Augment(AugmentArgs),
    /// Inject exact duplicates of selected images.
    Duplicate(DuplicateArgs),
}

#[derive(Args, serde::Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub count: usize,
    #[arg(long, default_value_t = 32)]
    pub base_size: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ColorModeArg::Grayscale)]
    #[serde(skip)]
    pub color_mode: ColorModeArg,
}

#[derive(Args, serde::Serialize)]
pub struct AugmentArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Border frame width or center patch side, in pixels.
    #[arg(long, default_value_t = 4)]
    pub thickness: usize,
    #[arg(long, value_enum, default_value_t = PlacementArg::Border)]
    #[serde(skip)]
    pub placement: PlacementArg,
}

#[derive(Args, serde::Serialize)]
pub struct DuplicateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Image id to duplicate; repeatable, paired with --count.
    #[arg(long = "id", required = true)]
    pub ids: Vec<String>,
    /// Total instances for the paired id; repeatable.
    #[arg(long = "count", required = true)]
    pub counts: Vec<usize>,
    /// Give every duplicate the original's key instead of a fresh one.
    #[arg(long)]
    pub shared_keys: bool,
}

pub fn run(cmd: DatasetCmd) -> Result<()> {
    match cmd {
        DatasetCmd::Generate(args) => generate(args),
        DatasetCmd::Augment(args) => augment(args),
        DatasetCmd::Duplicate(args) => duplicate(args),
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let config = SyntheticConfig {
        count: args.count,
        base_size: args.base_size,
        num_classes: args.classes,
        seed: args.seed,
    };
    let mut dataset = gen_synthetic_dataset(&config).context("generating dataset")?;
    dataset.keymap = Some(assign_keys(&dataset, args.seed, args.color_mode.into())?);
    save_dataset(&dataset, &args.out)?;
    dump_config(&args.out, &config)?;
    log_line(&args.out, &format!("generated {} images", dataset.len()))?;
    println!(
        "wrote {} images with keys to {}",
        dataset.len(),
        args.out.display()
    );
    Ok(())
}

fn augment(args: AugmentArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    let dataset = load_dataset(&args.dataset)?;
    let keymap = dataset.require_keymap()?;
    let spec = match args.placement {
        PlacementArg::Border => PatternSpec::border(args.thickness, keymap.color_mode),
        PlacementArg::Center => PatternSpec::center(args.thickness, keymap.color_mode),
    };
    if args.thickness == 0 {
        bail!("invalid thickness: the pattern thickness field must be positive");
    }
    let augmented = augment_dataset(&dataset, &spec).context("stamping patterns")?;
    save_dataset(&augmented, &args.out)?;
    dump_config(&args.out, &spec)?;
    log_line(&args.out, "augmented dataset")?;
    println!(
        "stamped {} images ({:?} {}px) into {}",
        augmented.len(),
        spec.placement,
        spec.thickness,
        args.out.display()
    );
    Ok(())
}

fn duplicate(args: DuplicateArgs) -> Result<()> {
    ensure_dir(&args.out)?;
    if args.ids.len() != args.counts.len() {
        bail!(
            "{} --id flags but {} --count flags; they pair one-to-one",
            args.ids.len(),
            args.counts.len()
        );
    }
    let dataset = load_dataset(&args.dataset)?;
    let out = inject_duplicates(&dataset, &args.ids, &args.counts, !args.shared_keys)?;
    save_dataset(&out, &args.out)?;
    dump_config(&args.out, &args)?;
    log_line(&args.out, "injected duplicates")?;
    println!(
        "dataset grew from {} to {} items; duplication counts echoed in manifest provenance",
        dataset.len(),
        out.len()
    );
    Ok(())
}
