//! Run configuration: one strict JSON document covering every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use smsdiff::calib::{KernelGeometry, DEFAULT_RSS_THRESHOLD, DEFAULT_TIKHONOV};
use smsdiff::diffusion::{ScheduleParams, TrainConfig};
use smsdiff::metrics::SsimParams;
use smsdiff::sampler::SamplerConfig;
use smsdiff::scene::SceneConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapSource {
    /// Use the simulator's maps.
    True,
    /// Estimate maps from each slice's ACS.
    Estimated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibConfig {
    pub kernel: KernelGeometry,
    /// Row stride of the Slice-GRAPPA kernel taps; `null` uses the in-plane
    /// acceleration so every tap lands on an acquired line.
    pub ky_stride: Option<usize>,
    /// Dense kernel used to re-separate fully populated data during the
    /// diffusion chain.
    pub dc_kernel: KernelGeometry,
    pub tikhonov: f64,
    pub maps: MapSource,
    pub rss_threshold: f64,
}

impl Default for CalibConfig {
    fn default() -> Self {
        CalibConfig {
            kernel: KernelGeometry::new(3, 5),
            ky_stride: None,
            dc_kernel: KernelGeometry::new(5, 5),
            tikhonov: DEFAULT_TIKHONOV,
            maps: MapSource::True,
            rss_threshold: DEFAULT_RSS_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionConfig {
    pub schedule: ScheduleParams,
    pub train: TrainConfig,
    /// Number of single-slice phantoms in the training set.
    pub n_train: usize,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            schedule: ScheduleParams::default(),
            train: TrainConfig::default(),
            n_train: 50,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub ssim: SsimParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives the scene (phantoms, coils, noise) and the sampler streams.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub sim: SceneConfig,
    pub calib: CalibConfig,
    pub diffusion: DiffusionConfig,
    pub sampler: SamplerConfig,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            sim: SceneConfig::default(),
            calib: CalibConfig::default(),
            diffusion: DiffusionConfig::default(),
            sampler: SamplerConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Read(PathBuf, std::io::Error),
    Parse(PathBuf, serde_json::Error),
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Read(p, e) => write!(f, "cannot read config {}: {e}", p.display()),
            ConfigError::Parse(p, e) => write!(f, "invalid config {}: {e}", p.display()),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read(p.to_path_buf(), e))?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse(p.to_path_buf(), e))
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.sim;
        if s.ny < 8 || s.nx < 8 || s.nc == 0 {
            return Err(ConfigError::Invalid(format!(
                "sim grid {}x{} with {} coils is too small",
                s.ny, s.nx, s.nc
            )));
        }
        if s.acs_lines > s.ny || s.accel == 0 || s.accel > s.ny {
            return Err(ConfigError::Invalid(format!(
                "accel {} and {} ACS lines do not fit {} lines",
                s.accel, s.acs_lines, s.ny
            )));
        }
        self.sim
            .acquisition_spec(self.seed)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.calib.kernel.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.calib.dc_kernel.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.diffusion.n_train == 0 {
            return Err(ConfigError::Invalid("diffusion.n_train must be positive".into()));
        }
        Ok(())
    }

    pub fn sg_geometry(&self) -> KernelGeometry {
        let stride = self.calib.ky_stride.unwrap_or(self.sim.accel);
        self.calib.kernel.with_stride(stride)
    }

    /// SHA-256 of the canonical JSON form (sorted keys, no whitespace).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}
