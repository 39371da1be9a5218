use std::path::Path;

use harvest_core::experiments::SweepSpec;
use harvest_core::kernels::{DetectorSpec, FieldModel, GeometrySpec, KernelOptions};
use harvest_core::windows::WindowProfile;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub gap: f64,
    pub window: WindowProfile,
}

/// Grid for `oracle-check`. Gaps and separations are in units of `T = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub gaps: Vec<f64>,
    pub separations: Vec<f64>,
    pub tolerance: f64,
    /// Random configurations for the expanded-form sign check.
    pub expanded_samples: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            gaps: vec![1.0, 2.0, 4.0],
            separations: vec![3.0, 5.0, 8.0],
            tolerance: 1e-5,
            expanded_samples: 20,
            seed: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_model")]
    pub model: FieldModel,
    #[serde(default)]
    pub geometry: Option<GeometrySpec>,
    #[serde(default)]
    pub detector_a: Option<DetectorConfig>,
    #[serde(default)]
    pub detector_b: Option<DetectorConfig>,
    #[serde(default)]
    pub kernel: KernelOptions,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub oracle: OracleConfig,
}

fn default_model() -> FieldModel {
    FieldModel::DiracRight
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: default_model(),
            geometry: None,
            detector_a: None,
            detector_b: None,
            kernel: KernelOptions::default(),
            sweep: None,
            oracle: OracleConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Geometry and both detectors, placed on the z axis.
    pub fn pair(&self) -> Result<(GeometrySpec, DetectorSpec, DetectorSpec), CliError> {
        let missing = |what: &str| CliError::Config(format!("config needs `{what}` for this command"));
        let g = self.geometry.ok_or_else(|| missing("geometry"))?;
        let a = self.detector_a.ok_or_else(|| missing("detector_a"))?;
        let b = self.detector_b.ok_or_else(|| missing("detector_b"))?;
        g.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let (da, db) = g.place(a.window, a.gap, b.window, b.gap);
        for d in [&da, &db] {
            d.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        g.check_detectors(&da, &db)
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok((g, da, db))
    }

    pub fn sweep(&self, seed: Option<u64>) -> Result<SweepSpec, CliError> {
        let mut s = self
            .sweep
            .clone()
            .ok_or_else(|| CliError::Config("config needs `sweep` for this command".into()))?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        s.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(s)
    }
}
