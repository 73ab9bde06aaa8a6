//! Run configuration, read from TOML.
//!
//! Every field has a default, so an empty file (or no file at all) is a
//! valid configuration: two full-resolution sensors observing six bands,
//! which is scenario S1. Relative paths resolve against the directory of
//! the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rfcd_core::scenarios::SensorSpec;
use rfcd_core::{AmOptions, NoiseModel, RasterFormat, ThresholdRule};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub format: RasterFormat,
    pub inputs: Inputs,
    pub sensor1: SensorConfig,
    pub sensor2: SensorConfig,
    pub regularization: Regularization,
    pub threshold: ThresholdRule,
    pub am: AmOptions,
    pub simulation: Simulation,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            format: RasterFormat::Pgm,
            inputs: Inputs::default(),
            sensor1: SensorConfig::default(),
            sensor2: SensorConfig::default(),
            regularization: Regularization::default(),
            threshold: ThresholdRule::Otsu,
            am: AmOptions::default(),
            simulation: Simulation::default(),
        }
    }
}

/// Image stems of the two observations and of the truth map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y1: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y2: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

/// One sensor: pixel pitch, band-averaging groups over source bands, blur,
/// and per-band noise variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub pitch: u32,
    /// Defaults to one group per band of the image (or of the simulated scene).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_groups: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blur_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_side: Option<usize>,
    /// Required by `detect`; `simulate` derives them from `snr_db` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_variances: Option<Vec<f64>>,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            pitch: 1,
            band_groups: None,
            blur_sigma: None,
            kernel_side: None,
            noise_variances: None,
        }
    }
}

impl SensorConfig {
    pub fn spec(&self, default_bands: usize) -> SensorSpec {
        let groups = self
            .band_groups
            .clone()
            .unwrap_or_else(|| (0..default_bands).map(|b| vec![b]).collect());
        SensorSpec {
            pitch: self.pitch,
            band_groups: groups,
            blur_sigma: self.blur_sigma,
            kernel_side: self.kernel_side,
        }
    }

    pub fn noise(&self, which: &str, bands: usize) -> Result<NoiseModel> {
        let Some(v) = &self.noise_variances else {
            bail!("{which}.noise_variances is required");
        };
        if v.len() != bands {
            bail!(
                "{which}.noise_variances has {} entries for {bands} bands",
                v.len()
            );
        }
        NoiseModel::new(v.clone()).with_context(|| format!("{which}.noise_variances"))
    }
}

/// `None` selects the library defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Regularization {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

/// Synthetic scene on the latent grid (the finer of the two sensor grids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Simulation {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub regions: usize,
    pub signature_scale: f64,
    pub changed_fraction: f64,
    pub blob_count: usize,
    pub magnitude: f64,
    pub snr_db: f64,
}

impl Default for Simulation {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            bands: 6,
            regions: 12,
            signature_scale: 1.0,
            changed_fraction: 0.1,
            blob_count: 6,
            magnitude: 0.3,
            snr_db: 30.0,
        }
    }
}

/// A configuration and the directory its relative paths resolve against.
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self {
                config: RunConfig::default(),
                base: PathBuf::from("."),
            });
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base.join(path)
        }
    }

    pub fn input(&self, path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        match path {
            Some(p) => Ok(self.resolve(p)),
            None => bail!("inputs.{key} is not set"),
        }
    }
}
