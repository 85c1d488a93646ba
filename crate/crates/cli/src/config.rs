use std::fs;
use std::path::{Path, PathBuf};

use posefuse::eval::DEFAULT_MAX_DT;
use posefuse::fusion::FusionNoise;
use posefuse::sim::SimConfig;
use posefuse::{DiagonalNoise, Pose2};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a pipeline run needs, loadable from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub simulation: SimConfig,
    /// Noise models the fusion stage assumes, independent of how the data
    /// was generated.
    pub noise: FusionNoise,
    pub skip_first: usize,
    pub max_dt: f64,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            simulation: SimConfig::default(),
            noise: FusionNoise::default(),
            skip_first: 0,
            max_dt: DEFAULT_MAX_DT,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.simulation
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        if !(self.max_dt.is_finite() && self.max_dt >= 0.0) {
            return Err(CliError::Validation("max_dt must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Parses `a,b,c` into three finite numbers.
pub fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, p) in out.iter_mut().zip(&parts) {
        let v: f64 = p.parse().map_err(|_| format!("invalid number {p:?}"))?;
        if !v.is_finite() {
            return Err(format!("non-finite number {p:?}"));
        }
        *slot = v;
    }
    Ok(out)
}

pub fn parse_pose(s: &str) -> Result<Pose2, String> {
    let [x, y, t] = parse_triple(s)?;
    Ok(Pose2::new(x, y, t))
}

pub fn parse_noise(s: &str) -> Result<DiagonalNoise, String> {
    let [a, b, c] = parse_triple(s)?;
    DiagonalNoise::new(a, b, c).map_err(|e| e.to_string())
}
