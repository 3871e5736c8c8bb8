//! JSON run reports.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{EvalConfig, FitConfig, GenerateConfig, RunConfig};
use crate::engine::FitReport;
use crate::metrics::ComponentMatch;
use crate::Result;

/// Printed in every evaluation report so the number can be reproduced.
pub const AMARI_DEFINITION: &str = "P = pinv(ref) * est (est matched and truncated to the \
reference columns); d(P) = 1/(2D) * [sum_i (sum_j |p_ij| / max_j |p_ij| - 1) + sum_j (sum_i \
|p_ij| / max_i |p_ij| - 1)]";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateReport {
    pub command: String,
    pub config: GenerateConfig,
    /// The config as TOML, replayable with `psfa rerun`.
    pub config_toml: String,
    pub seed: u64,
    /// How `noise_mean`/`noise_sd` are interpreted.
    pub noise_model: String,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub singular_values: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReportDocument {
    pub command: String,
    pub version: String,
    pub config: FitConfig,
    pub config_toml: String,
    /// Restart seeds in order.
    pub seeds: Vec<u64>,
    /// Worker threads actually used.
    pub threads: usize,
    /// Reductions run in a fixed order, so results do not depend on
    /// `threads`.
    pub deterministic_reduction: bool,
    /// Absent for the PCA baseline.
    pub fit: Option<FitReport>,
    pub pca: Option<PcaSummary>,
    pub wall_seconds: f64,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRecovery {
    /// Pearson correlation of true variances with estimated variances.
    pub pearson: f64,
    pub spearman: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReportDocument {
    pub command: String,
    pub config: EvalConfig,
    pub config_toml: String,
    pub est_shape: (usize, usize),
    pub ref_shape: (usize, usize),
    pub matching: ComponentMatch,
    pub avg_abs_correlation: f64,
    pub amari_index: f64,
    pub amari_definition: String,
    /// Kurtosis (`m₄/m₂²`) of each matched estimated map, in reference order.
    pub kurtosis: Vec<f64>,
    pub noise_recovery: Option<NoiseRecovery>,
}

pub fn config_toml(cfg: RunConfig) -> String {
    cfg.to_toml()
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize to JSON");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Extracts the replayable config from any report written by this crate.
pub fn config_from_report(text: &str) -> Result<RunConfig> {
    #[derive(Deserialize)]
    struct Echo {
        config_toml: String,
    }
    let echo: Echo = serde_json::from_str(text)
        .map_err(|e| crate::Error::Config(format!("report has no config echo: {e}")))?;
    RunConfig::from_toml(&echo.config_toml)
}
