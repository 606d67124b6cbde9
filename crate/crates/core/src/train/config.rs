use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::ctdata::SimulationConfig;
use crate::lossmetrics::{LossWeights, MetricOptions, SsimParams};
use crate::model::{ModelConfig, OUTPUT_STRIDE};
use crate::tensor::AdamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub ssim: SsimParams,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            ssim: SsimParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset root: `dataset.json` plus `train/` and `test/`.
    pub dir: PathBuf,
    pub synthetic: SimulationConfig,
    pub train_volumes: usize,
    pub test_volumes: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            synthetic: SimulationConfig::default(),
            train_volumes: 8,
            test_volumes: 2,
        }
    }
}

/// Everything a run depends on. Missing JSON fields take the desk values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Side of the square training crops.
    pub crop_size: usize,
    /// Random crops drawn from each triplet per epoch.
    pub crops_per_triplet: usize,
    pub seed: u64,
    pub data: DataConfig,
    pub output_dir: PathBuf,
    /// Zeroes the wall-time column so logs of equal runs are byte-identical.
    pub strict_determinism: bool,
    /// Keep `epoch_<k>.ckpt` every this many epochs; `last` and `best` are
    /// always written.
    pub checkpoint_every: usize,
    pub metrics: MetricOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    /// Laptop-CPU scale: quarter-width model, batch 4, 64² crops.
    pub fn desk() -> Self {
        Self {
            model: ModelConfig::desk(),
            loss: LossConfig::default(),
            optimizer: AdamConfig::default(),
            batch_size: 4,
            epochs: 20,
            crop_size: 64,
            crops_per_triplet: 4,
            seed: 0,
            data: DataConfig::default(),
            output_dir: PathBuf::from("runs/desk"),
            strict_determinism: false,
            checkpoint_every: 1,
            metrics: MetricOptions::default(),
        }
    }

    /// Full-width model with batch 88 and learning rate 0.01 on 512² slices.
    pub fn full_scale() -> Self {
        let mut data = DataConfig::default();
        data.synthetic.size = 512;
        data.synthetic.n_detectors = 725;
        data.synthetic.n_views = 720;
        Self {
            model: ModelConfig::default(),
            optimizer: AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            },
            batch_size: 88,
            crop_size: 512,
            crops_per_triplet: 1,
            data,
            output_dir: PathBuf::from("runs/full"),
            ..Self::desk()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| TrainError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            TrainError::Config(msg) => TrainError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 || self.epochs == 0 || self.crops_per_triplet == 0 || self.checkpoint_every == 0 {
            return bad("batch_size, epochs, crops_per_triplet and checkpoint_every must be at least 1".into());
        }
        if self.crop_size == 0 || self.crop_size % OUTPUT_STRIDE != 0 {
            return bad(format!("crop_size must be a positive multiple of {OUTPUT_STRIDE}"));
        }
        if self.crop_size > self.data.synthetic.size {
            return bad(format!(
                "crop_size {} exceeds the slice size {}",
                self.crop_size, self.data.synthetic.size
            ));
        }
        if self.data.train_volumes == 0 || self.data.test_volumes == 0 {
            return bad("need at least one train and one test volume".into());
        }
        self.model.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.model
            .check_input(self.crop_size, self.crop_size)
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.optimizer
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.loss
            .weights
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.loss
            .ssim
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        if self.loss.ssim.window_size > self.crop_size {
            return bad(format!(
                "SSIM window {} exceeds crop_size {}",
                self.loss.ssim.window_size, self.crop_size
            ));
        }
        self.data
            .synthetic
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(())
    }
}
