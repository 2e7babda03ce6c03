//! Run configuration: JSON-file loadable, CLI-overridable, hashable for
//! run-directory naming.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::ThresholdMode;
use crate::error::{Error, Result};

/// Sub-loss balance (α, β, 1−α−β). The grid-search constraint applies to
/// every configuration: each of the three weights must be at least 0.1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

const WEIGHT_EPS: f64 = 1e-9;

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Self {
        LossWeights { alpha, beta }
    }

    pub fn excl_weight(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.1 - WEIGHT_EPS
            || self.beta < 0.1 - WEIGHT_EPS
            || self.alpha + self.beta > 0.9 + WEIGHT_EPS
        {
            return Err(Error::Config(format!(
                "loss weights alpha={}, beta={}, 1-alpha-beta={} must all be at least 0.1",
                self.alpha,
                self.beta,
                self.excl_weight()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Modalities {
    Image,
    Sentence,
    Both,
}

impl Modalities {
    pub fn uses_image(&self) -> bool {
        matches!(self, Modalities::Image | Modalities::Both)
    }

    pub fn uses_sentence(&self) -> bool {
        matches!(self, Modalities::Sentence | Modalities::Both)
    }
}

fn d_lr() -> f64 {
    1e-4
}
fn d_batch() -> usize {
    32
}
fn d_epochs() -> usize {
    30
}
fn d_alpha() -> f64 {
    0.3
}
fn d_beta() -> f64 {
    0.5
}
fn d_lambda() -> f64 {
    10.0
}
fn d_threshold_mode() -> ThresholdMode {
    ThresholdMode::PerFamily
}
fn d_modalities() -> Modalities {
    Modalities::Both
}
fn d_image_h() -> usize {
    32
}
fn d_image_w() -> usize {
    32
}
fn d_l_max() -> usize {
    64
}
fn d_d_z() -> usize {
    1024
}
fn d_d_sub() -> usize {
    128
}
fn d_model_dim() -> usize {
    64
}
fn d_ffn_dim() -> usize {
    128
}
fn d_n_blocks() -> usize {
    2
}
fn d_n_heads() -> usize {
    1
}
fn d_min_count() -> usize {
    1
}
fn d_train_fraction() -> f64 {
    0.8
}
fn d_sub_norm_cap() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_threshold_mode")]
    pub threshold_mode: ThresholdMode,
    #[serde(default = "d_modalities")]
    pub modalities: Modalities,
    /// Families with id below this are known; the rest are held out as
    /// unknown at test time.
    pub k_known: usize,
    #[serde(default = "d_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "d_image_h")]
    pub image_h: usize,
    #[serde(default = "d_image_w")]
    pub image_w: usize,
    #[serde(default = "d_l_max")]
    pub l_max: usize,
    #[serde(default = "d_d_z")]
    pub d_z: usize,
    #[serde(default = "d_d_sub")]
    pub d_sub: usize,
    #[serde(default = "d_model_dim")]
    pub model_dim: usize,
    #[serde(default = "d_ffn_dim")]
    pub ffn_dim: usize,
    #[serde(default = "d_n_blocks")]
    pub n_blocks: usize,
    #[serde(default = "d_n_heads")]
    pub n_heads: usize,
    /// Vocabulary frequency threshold.
    #[serde(default = "d_min_count")]
    pub min_count: usize,
    /// Evaluate held-out metrics every N epochs (0 = final evaluation only).
    #[serde(default)]
    pub eval_every: usize,
    /// Optional hinge margin for the discriminative loss; the literal
    /// unbounded form is the default.
    #[serde(default)]
    pub disc_margin: Option<f64>,
    #[serde(default = "d_sub_norm_cap")]
    pub sub_norm_cap: f64,
}

impl TrainConfig {
    pub fn with_k_known(k_known: usize) -> Self {
        TrainConfig {
            learning_rate: d_lr(),
            batch_size: d_batch(),
            epochs: d_epochs(),
            alpha: d_alpha(),
            beta: d_beta(),
            lambda: d_lambda(),
            seed: 0,
            threshold_mode: d_threshold_mode(),
            modalities: d_modalities(),
            k_known,
            train_fraction: d_train_fraction(),
            image_h: d_image_h(),
            image_w: d_image_w(),
            l_max: d_l_max(),
            d_z: d_d_z(),
            d_sub: d_d_sub(),
            model_dim: d_model_dim(),
            ffn_dim: d_ffn_dim(),
            n_blocks: d_n_blocks(),
            n_heads: d_n_heads(),
            min_count: d_min_count(),
            eval_every: 0,
            disc_margin: None,
            sub_norm_cap: d_sub_norm_cap(),
        }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights::new(self.alpha, self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be at least 2 (triplets need peers)".into(),
            ));
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be finite and nonnegative".into()));
        }
        if self.lambda <= 0.0 {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if self.image_h * self.image_w == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if self.l_max == 0 || self.d_z == 0 || self.d_sub == 0 {
            return Err(Error::Config("l_max, d_z and d_sub must be positive".into()));
        }
        if self.n_heads == 0 || self.model_dim % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} must be divisible by n_heads {}",
                self.model_dim, self.n_heads
            )));
        }
        if self.n_blocks == 0 {
            return Err(Error::Config("n_blocks must be at least 1".into()));
        }
        if self.k_known == 0 {
            return Err(Error::Config("k_known must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(
                "train_fraction must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("config json: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    /// FNV-1a over the canonical JSON; stable across runs for run-dir naming.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization cannot fail");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in canonical.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
