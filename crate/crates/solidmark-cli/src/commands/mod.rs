pub mod dataset;
pub mod evaluate;
pub mod experiment;
pub mod report;
pub mod train;

use anyhow::{Context, Result};
use std::io::Write;
use std::path::Path;

/// Write the resolved configuration next to the outputs.
pub fn dump_config<T: serde::Serialize>(out_dir: &Path, config: &T) -> Result<()> {
    let path = out_dir.join("config.json");
    let text = serde_json::to_string_pretty(config)?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Append a timestamped line to the sidecar log. Data files never carry
/// timestamps so reruns stay byte-identical.
pub fn log_line(out_dir: &Path, message: &str) -> Result<()> {
    let path = out_dir.join("run.log");
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    writeln!(file, "[{now}] {message}")?;
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(())
}
