use anyhow::{Context, Result};
use clap::Args;
use std::path::PathBuf;

#[derive(Args)]
pub struct ReportArgs {
    /// Directory holding report.csv and summary.json from an evaluation.
    #[arg(long)]
    pub input: PathBuf,
}

/// Re-summarize a written report: recount the CSV rows and check them against
/// the stored summary.
pub fn run(args: ReportArgs) -> Result<()> {
    let summary_path = args.input.join("summary.json");
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&summary_path)
            .with_context(|| format!("reading {}", summary_path.display()))?,
    )?;

    let csv_path = args.input.join("report.csv");
    let mut reader = csv::Reader::from_path(&csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    let headers = reader.headers()?.clone();
    let min_idx = headers
        .iter()
        .position(|h| h == "min_distance")
        .context("report.csv has no min_distance column")?;
    let mut mins = Vec::new();
    for record in reader.records() {
        let record = record?;
        mins.push(record[min_idx].parse::<f64>()?);
    }

    println!("rows: {}", mins.len());
    println!("delta    stored    recount   match");
    let counts = summary["counts"]
        .as_array()
        .context("summary.json has no counts")?;
    let mut all_match = true;
    for entry in counts {
        let delta = entry[0].as_f64().context("bad delta")?;
        let stored = entry[1].as_u64().context("bad count")? as usize;
        let recount = mins.iter().filter(|m| **m <= delta).count();
        let ok = stored == recount;
        all_match &= ok;
        println!("{delta:<8} {stored:<9} {recount:<9} {ok}");
    }
    anyhow::ensure!(all_match, "summary counts do not match the CSV recount");
    Ok(())
}
