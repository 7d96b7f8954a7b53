//! Command-line entry point binding datasets, training, evaluation and
//! experiments into reproducible runs.
//!
//! Every command is idempotent for a fixed config and seed: re-running
//! overwrites data files with identical bytes. Timestamps go to the `run.log`
//! sidecar, never into data files. CLI flags override config-file values and
//! the resolved configuration is dumped next to the outputs.

mod commands;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "solidmark",
    about = "Per-image memorization evaluation via key borders and outpainting",
    version
)]
struct Cli {
    /// Worker threads for parallel evaluation (defaults to available cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate, augment or duplicate datasets.
    #[command(subcommand)]
    Dataset(commands::dataset::DatasetCmd),
    /// Train the epsilon-predictor on an augmented dataset.
    Train(commands::train::TrainArgs),
    /// Evaluate memorization of a trained checkpoint.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Run one of the named experiment harnesses.
    #[command(subcommand)]
    Experiment(commands::experiment::ExperimentCmd),
    /// Re-summarize a written evaluation report.
    Report(commands::report::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // Ignore failure when a pool already exists (tests set one up).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let result: Result<()> = match cli.command {
        Commands::Dataset(cmd) => commands::dataset::run(cmd),
        Commands::Train(args) => commands::train::run(args),
        Commands::Evaluate(args) => commands::evaluate::run(args),
        Commands::Experiment(cmd) => commands::experiment::run(cmd),
        Commands::Report(args) => commands::report::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
