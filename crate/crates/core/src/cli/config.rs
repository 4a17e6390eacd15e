use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::DenoiserConfig;
use crate::diffusion::{SamplerConfig, ScheduleConfig, TrainConfig};
use crate::error::Result;
use crate::radar::dataset::{read_json, write_json};
use crate::radar::DataConfig;
use crate::verification::DEFAULT_THRESHOLD;

/// Every knob of a run. Serialized next to the outputs as `config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: DenoiserConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub sampler: SamplerConfig,
    pub threshold: f64,
    /// Reporting-only MSE tolerance for a forecast to count as on target.
    pub target_tolerance: Option<f64>,
    /// Seeds per variant in `ablate`, starting at `seed`.
    pub repeats: usize,
    pub images: bool,
    pub paths: RunPaths,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPaths {
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub pred: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            model: DenoiserConfig::default(),
            schedule: ScheduleConfig::default(),
            train: TrainConfig::default(),
            sampler: SamplerConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            target_tolerance: None,
            repeats: 1,
            images: false,
            paths: RunPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Propagates the root seed into the component seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.data.seed = seed;
        self.model.init_seed = seed;
        self.train.seed = seed;
        self
    }
}
