//! Run configuration, read from TOML. Every field is optional; unset
//! experiment parameters fall back to per-experiment defaults.
//!
//! ```toml
//! seed = 7
//! samples = 20
//! folds = 5
//! trees = 10
//! rfe_keep = 0          # 0 disables RFE
//!
//! [defense]
//! mean_w = 6.0
//! n_dummies = 300
//! defenses = ["pad", "delay_group", "add_dummies"]
//!
//! [stream.segmenter]
//! window_length = 30.0
//! stride = 1.0
//! byte_threshold = 200
//! mode = "merged"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wearlab::stream::{threshold_grid, Segmenter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Profile pack TOML; the built-in pack when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pack: Option<PathBuf>,
    /// Day plan TOML for the stream experiment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub day_plan: Option<PathBuf>,
    /// Samples per class.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    pub duration_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trees: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rfe_keep: Option<usize>,
    /// Fail instead of lowering the fold count when a class is too small.
    pub strict: bool,
    pub loss_rates: Vec<f64>,
    pub defense: DefenseSettings,
    pub transfer: TransferSettings,
    pub aging: AgingSettings,
    pub stream: StreamSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            pack: None,
            day_plan: None,
            samples: None,
            duration_s: 30.0,
            folds: None,
            trees: None,
            rfe_keep: None,
            strict: false,
            loss_rates: vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0],
            defense: DefenseSettings::default(),
            transfer: TransferSettings::default(),
            aging: AgingSettings::default(),
            stream: StreamSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseSettings {
    pub mean_w: f64,
    pub n_dummies: usize,
    /// Any of `pad`, `delay_group`, `add_dummies`, or several joined by `+`.
    pub defenses: Vec<String>,
}

impl Default for DefenseSettings {
    fn default() -> Self {
        DefenseSettings {
            mean_w: 6.0,
            n_dummies: 300,
            defenses: vec!["pad".into(), "delay_group".into(), "add_dummies".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferSettings {
    /// Relative perturbation of the second pair's gap means.
    pub perturbation: f64,
}

impl Default for TransferSettings {
    fn default() -> Self {
        TransferSettings { perturbation: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgingSettings {
    pub days: usize,
    /// Gap means grow by this fraction per day.
    pub drift_per_day: f64,
}

impl Default for AgingSettings {
    fn default() -> Self {
        AgingSettings { days: 4, drift_per_day: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSettings {
    pub thresholds: Vec<f64>,
    /// Training samples per action class.
    pub train_samples: usize,
    pub segmenter: Segmenter,
}

impl Default for StreamSettings {
    fn default() -> Self {
        StreamSettings { thresholds: threshold_grid(0.05, 0.6, 0.05), train_samples: 30, segmenter: Segmenter::default() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the resolved configuration, hex.
    pub fn digest(&self) -> Result<String> {
        let hash = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
    }
}
