//! Run configuration: a TOML document whose keys mirror the command-line
//! flags. Flags given on the command line override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use satrecon::camera::Hemisphere;
use satrecon::depth::FusionParams;
use satrecon::eval::{DEFAULT_CELL, DEFAULT_SEARCH_CELLS, DEFAULT_THRESHOLD};
use satrecon::preprocess::{DEFAULT_BROVEY_WEIGHTS, DEFAULT_CLOUD_THRESHOLD, DEFAULT_PERCENTILES};

use crate::error::{CliError, Result};
use crate::synth::SynthConfig;

pub const DEFAULT_POISSON_RADIUS: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// `[e_min, n_min, e_max, n_max]` in UTM meters.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aoi: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zone: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hemisphere: Option<Hemisphere>,
    pub cloud_threshold: f64,
    pub percentiles: [f64; 2],
    pub weights: [f64; 3],
    pub poisson_radius: f64,
    pub cell: f64,
    /// Completeness threshold, meters.
    pub threshold: f64,
    pub search_cells: usize,
    pub seed: u64,
    pub fusion_tolerance: f64,
    pub min_consistent: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let fusion = FusionParams::default();
        Self {
            aoi: None,
            zone: None,
            hemisphere: None,
            cloud_threshold: DEFAULT_CLOUD_THRESHOLD,
            percentiles: [DEFAULT_PERCENTILES.0, DEFAULT_PERCENTILES.1],
            weights: DEFAULT_BROVEY_WEIGHTS,
            poisson_radius: DEFAULT_POISSON_RADIUS,
            cell: DEFAULT_CELL,
            threshold: DEFAULT_THRESHOLD,
            search_cells: DEFAULT_SEARCH_CELLS,
            seed: 0,
            fusion_tolerance: fusion.tolerance,
            min_consistent: fusion.min_consistent,
            input: None,
            output: None,
            synth: SynthConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks every parameter against the precondition of the operation
    /// that consumes it.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(0.0..=1.0).contains(&self.cloud_threshold) {
            return bad(format!("cloud_threshold {} outside [0, 1]", self.cloud_threshold));
        }
        let [lo, hi] = self.percentiles;
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return bad(format!("percentiles must satisfy 0 <= lo < hi <= 100, got {lo}, {hi}"));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.weights.iter().sum::<f64>() <= 0.0 {
            return bad("weights must be non-negative with a positive sum".into());
        }
        for (name, v) in [("poisson_radius", self.poisson_radius), ("cell", self.cell), ("threshold", self.threshold)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.fusion_tolerance.is_finite() && self.fusion_tolerance >= 0.0) {
            return bad(format!("fusion_tolerance must be non-negative, got {}", self.fusion_tolerance));
        }
        if let Some([e0, n0, e1, n1]) = self.aoi {
            if !(e0 <= e1 && n0 <= n1) {
                return bad("aoi min must not exceed max".into());
            }
        }
        if let Some(z) = self.zone {
            if !(1..=60).contains(&z) {
                return bad(format!("zone {z} outside [1, 60]"));
            }
        }
        self.synth.validate()
    }

    pub fn fusion(&self) -> FusionParams {
        FusionParams { tolerance: self.fusion_tolerance, min_consistent: self.min_consistent }
    }
}
