//! Schema-versioned run configuration and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureConfig;
use crate::error::{Error, Result};
use crate::nn::{ModelKind, TrainConfig};
use crate::phantom::PhantomSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub spec: PhantomSpec,
    pub patients_per_class: usize,
    pub rois_per_patient: usize,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig { spec: PhantomSpec::default(), patients_per_class: 6, rois_per_patient: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub windows: Vec<usize>,
    pub models: Vec<ModelKind>,
    /// Restricts the sweep to these patients; all patients when absent.
    pub patients: Option<Vec<String>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            windows: vec![1, 3, 5, 9, 15, 25],
            models: vec![ModelKind::PolarOnly, ModelKind::RadiomicsOnly, ModelKind::Prffn],
            patients: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    /// Quarter-wave retarder angles (degrees) of the four generator states.
    pub psg_angles_deg: [f64; 4],
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig { psg_angles_deg: crate::mueller::DEFAULT_PSG_ANGLES_DEG }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub phantom: PhantomConfig,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "all_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn all_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            phantom: PhantomConfig::default(),
            acquisition: AcquisitionConfig::default(),
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            models: all_models(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.phantom.spec.validate().map_err(|e| Error::config(e.to_string()))?;
        if self.phantom.patients_per_class == 0 || self.phantom.rois_per_patient == 0 {
            return Err(Error::config("phantom patient and ROI counts must be at least 1"));
        }
        self.features.validate()?;
        self.train.validate()?;
        if self.models.is_empty() || self.sweep.models.is_empty() {
            return Err(Error::config("model lists must not be empty"));
        }
        let w = &self.sweep.windows;
        if w.first() != Some(&1) || w.windows(2).any(|p| p[0] >= p[1]) || w.iter().any(|v| v % 2 == 0) {
            return Err(Error::config("sweep windows must be odd, strictly ascending and start at 1"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Everything needed to reproduce a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Vec<String>,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: Vec<String>, config: RunConfig) -> Self {
        Manifest {
            tool: "prffn".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            seeds: BTreeMap::from([("run".to_string(), config.seed)]),
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
