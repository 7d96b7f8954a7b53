//! Desk-scale reproductions of the experimental designs: duplication,
//! augmentation robustness, mitigation re-evaluation, ablations, the scoring
//! pathology fixtures, and the oracle models that calibrate the pipeline.

pub mod calibration;
mod fixtures;
mod mitigation;
mod oracle;
mod studies;

pub use calibration::{fp_rate_any_of_grid, fp_rate_closed_form, fp_rate_grid};
pub use fixtures::{
    monochrome_bias_fixture, percentile_pathology_fixture, MonochromeBiasFixture,
    PathologyFixture,
};
pub use mitigation::{transform_caption, Mitigation};
pub use oracle::{OracleKind, OracleModel, TargetDenoiser};
pub use studies::{
    duplication_arms, plan_duplication, run_ablation, run_augmentation_study,
    run_duplication_study, run_mitigation_study, transformed_dataset, AblationKind,
    DuplicationLevel, DuplicationPlan, DuplicationStudyConfig, StudyModel,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;


/// Eidetic counts for one experiment arm, with enough raw data that every
/// derived percentage is recomputable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentArm {
    pub name: String,
    /// Arm-specific parameters (level, transform, method, magnitude...).
    pub params: serde_json::Value,
    /// Number of evaluated units (images or originals).
    pub n: usize,
    /// `(delta, count)` in descending delta order.
    pub counts: Vec<(f64, usize)>,
    /// `(delta, chance rate)` baselines aligned with `counts`.
    pub chance: Vec<(f64, f64)>,
    /// Percent change of counts vs the baseline arm, when one exists.
    pub pct_change: Option<Vec<(f64, f64)>>,
    /// Extra per-arm observables (channel spread, score stats...).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
    pub status: ArmStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "state", content = "error")]
pub enum ArmStatus {
    Ok,
    Failed(String),
}

impl ExperimentArm {
    pub fn count_at(&self, delta: f64) -> Option<usize> {
        self.counts
            .iter()
            .find(|(d, _)| (*d - delta).abs() < 1e-12)
            .map(|(_, c)| *c)
    }

    pub fn fraction_at(&self, delta: f64) -> Option<f64> {
        self.count_at(delta).map(|c| c as f64 / self.n as f64)
    }
}

/// Percent change `(new - old) / old * 100`, None when the baseline is zero.
pub fn percent_change(old: usize, new: usize) -> Option<f64> {
    if old == 0 {
        None
    } else {
        Some((new as f64 - old as f64) / old as f64 * 100.0)
    }
}

/// A named experiment: configuration echo, seed, and one entry per arm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub name: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub arms: Vec<ExperimentArm>,
}

impl ExperimentRun {
    pub fn arm(&self, name: &str) -> Result<&ExperimentArm> {
        self.arms
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    /// Fill `pct_change` on every non-baseline arm from stored raw counts.
    pub fn derive_changes(&mut self, baseline: &str) {
        let base = match self.arms.iter().find(|a| a.name == baseline) {
            Some(b) => b.counts.clone(),
            None => return,
        };
        for arm in &mut self.arms {
            if arm.name == baseline {
                continue;
            }
            let changes = arm
                .counts
                .iter()
                .zip(&base)
                .filter_map(|((d, new), (_, old))| percent_change(*old, *new).map(|p| (*d, p)))
                .collect::<Vec<_>>();
            arm.pct_change = Some(changes);
        }
    }

    /// CSV: one row per (arm, delta) with count, rate, chance and % change.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
        let io_err = |e: csv::Error| Error::io(path.display().to_string(), std::io::Error::other(e));
        w.write_record(["arm", "delta", "n", "count", "rate", "chance", "pct_change"])
            .map_err(io_err)?;
        for arm in &self.arms {
            for (i, (delta, count)) in arm.counts.iter().enumerate() {
                let chance = arm.chance.get(i).map(|(_, c)| c.to_string()).unwrap_or_default();
                let pct = arm
                    .pct_change
                    .as_ref()
                    .and_then(|p| p.iter().find(|(d, _)| d == delta))
                    .map(|(_, p)| p.to_string())
                    .unwrap_or_default();
                w.write_record([
                    arm.name.as_str(),
                    &delta.to_string(),
                    &arm.n.to_string(),
                    &count.to_string(),
                    &(*count as f64 / arm.n as f64).to_string(),
                    &chance,
                    &pct,
                ])
                .map_err(io_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("run serializes");
        let mut f =
            std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(text.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}
