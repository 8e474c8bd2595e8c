use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// All knobs of the explanation pipeline. A JSON config file overrides the
/// defaults and command-line flags override the file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Quantile thresholds (percent) for the density-interval seeding.
    pub quantiles: Vec<f64>,
    /// Minimum enclosed anomalies; defaults to the seed-mass median.
    pub mass_threshold: Option<usize>,
    /// Maximum enclosed normals; defaults to the seed-impurity median.
    pub purity_threshold: Option<usize>,
    /// Penalty weights for vicinity anomalies.
    pub alpha_grid: Vec<f64>,
    /// Penalty weights for normal points.
    pub lambda_grid: Vec<f64>,
    /// Bits per transmitted coordinate.
    pub log2_f: f64,
    /// Rectangle expansion factor for the vicinity filter.
    pub vicinity_margin: f64,
    /// Highest lattice level to expand.
    pub level_cap: usize,
    /// Upper bound on the pack-count sweep.
    pub k_cap: usize,
    pub seed: u64,
    /// Worker threads; defaults to available parallelism.
    pub workers: Option<usize>,
    /// Price pack shapes as full matrices (parity experiments only).
    pub full_shape_cost: bool,
    /// Write the per-level lattice to lattice.json.
    pub dump_lattice: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            quantiles: vec![80.0, 85.0, 90.0, 95.0],
            mass_threshold: None,
            purity_threshold: None,
            alpha_grid: vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            lambda_grid: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
            log2_f: 10.0,
            vicinity_margin: 1.0,
            level_cap: 6,
            k_cap: 25,
            seed: 42,
            workers: None,
            full_shape_cost: false,
            dump_lattice: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let config: PipelineConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.quantiles.is_empty() || self.alpha_grid.is_empty() || self.lambda_grid.is_empty() {
            return Err(CliError::input("quantile and penalty grids must be non-empty"));
        }
        if self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 100.0)) {
            return Err(CliError::input("quantiles must lie strictly between 0 and 100"));
        }
        if self
            .alpha_grid
            .iter()
            .chain(&self.lambda_grid)
            .any(|v| !(*v > 0.0))
        {
            return Err(CliError::input("penalty grid entries must be positive"));
        }
        if !(self.log2_f > 0.0) {
            return Err(CliError::input("log2_f must be positive"));
        }
        if self.vicinity_margin < 0.0 {
            return Err(CliError::input("vicinity margin must be non-negative"));
        }
        if self.level_cap == 0 || self.k_cap == 0 {
            return Err(CliError::input("level_cap and k_cap must be at least 1"));
        }
        Ok(())
    }
}
