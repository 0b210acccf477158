//! Run configuration: one TOML document holding every knob. Unknown keys
//! are rejected; the effective configuration is written next to every
//! output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, GaussianSpec};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::{swap_from_pairs, AdamConfig, AugmentConfig, DecodeOptions, LossConfig, TrainOptions};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecConfig {
    pub gaussian: GaussianSpec,
    pub decoder: Decoder,
    pub dark_modulation: bool,
    pub flip_test: bool,
    /// Landmark pairs exchanged by a horizontal mirror.
    pub flip_pairs: Vec<[usize; 2]>,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            gaussian: GaussianSpec::default(),
            decoder: Decoder::Dark,
            dark_modulation: true,
            flip_test: true,
            flip_pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            epochs: 30,
            batch_size: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub thresholds_mm: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds_mm: crate::train::DEFAULT_THRESHOLDS_MM.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataPaths,
    pub model: ModelConfig,
    pub codec: CodecConfig,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub augment: AugmentConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// Writes the effective configuration as `config.toml` in `dir`.
    pub fn echo_into(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let path = dir.as_ref().join("config.toml");
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.model.validate().map_err(cfg_err)?;
        self.codec.gaussian.validate().map_err(cfg_err)?;
        self.loss.validate(self.model.head.num_keypoints).map_err(cfg_err)?;
        self.augment.validate().map_err(cfg_err)?;
        self.adam().validate().map_err(cfg_err)?;
        swap_from_pairs(self.model.head.num_keypoints, &self.codec.flip_pairs).map_err(cfg_err)?;
        if self.optim.batch_size == 0 {
            return Err(Error::Config("optim.batch_size must be positive".into()));
        }
        if self.eval.thresholds_mm.is_empty() || self.eval.thresholds_mm.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Config("eval.thresholds_mm must be non-empty and positive".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.optim.lr,
            beta1: self.optim.beta1,
            beta2: self.optim.beta2,
            eps: self.optim.eps,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.optim.epochs,
            batch_size: self.optim.batch_size,
            adam: self.adam(),
            augment: self.augment.clone(),
            loss: self.loss.clone(),
            gaussian: self.codec.gaussian.clone(),
            seed: self.seed,
            thresholds_mm: self.eval.thresholds_mm.clone(),
        }
    }

    pub fn decode_options(&self) -> Result<DecodeOptions> {
        Ok(DecodeOptions {
            decoder: self.codec.decoder,
            gaussian: self.codec.gaussian.clone(),
            modulated: self.codec.dark_modulation,
            flip_test: self.codec.flip_test,
            swap: swap_from_pairs(self.model.head.num_keypoints, &self.codec.flip_pairs)?,
            decode_stride: None,
        })
    }
}
