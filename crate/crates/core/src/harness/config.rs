//! Experiment configuration (TOML) and its content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::{CorruptionSpec, StreamSpec};
use crate::error::{Error, Result};
use crate::learner::{TrainerConfig, UpdateStrategy};
use crate::metrics::SafeguardThresholds;
use crate::optim::LbfgsConfig;
use crate::theory::default_solver;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Master seed; every random stream derives from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub quiet: bool,
    pub data: DataSource,
    #[serde(default)]
    pub base: BaseConfig,
    #[serde(default)]
    pub strategies: Vec<LabeledStrategy>,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default)]
    pub corruptions: Vec<CorruptionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelayConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_study: Option<InitStudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem: Option<TheoremConfig>,
    #[serde(default)]
    pub safeguards: SafeguardConfig,
}

fn default_seed() -> u64 {
    42
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn seven() -> u32 {
    7
}

fn ten() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic stream. Its `seed` is replaced by the master seed.
    Generated {
        #[serde(default)]
        stream: StreamSpec,
    },
    /// Files in the text example format, concatenated in order.
    Files {
        paths: Vec<PathBuf>,
        /// Inferred from the largest feature index when absent.
        #[serde(default)]
        dimension: Option<usize>,
    },
}

/// The initial full-training window `[start, start + days)`. Online runs
/// start at the first batch after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseConfig {
    pub start: u32,
    pub days: u32,
    pub trainer: TrainerConfig,
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self {
            start: 0,
            days: 7,
            trainer: TrainerConfig::default(),
        }
    }
}

impl BaseConfig {
    pub fn first_online(&self) -> u32 {
        self.start + self.days
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledStrategy {
    pub label: String,
    /// Skip training on batches that fail the CTR or volume bands.
    #[serde(default)]
    pub quarantine: bool,
    #[serde(flatten)]
    pub strategy: UpdateStrategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "yes")]
    pub stale: bool,
    #[serde(default = "yes")]
    pub moving_window: bool,
    #[serde(default = "seven")]
    pub window_days: u32,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            stale: true,
            moving_window: true,
            window_days: 7,
        }
    }
}

/// Scores snapshots of `strategy` trained through `eval_start - delay` on
/// `[eval_start, eval_start + eval_days)`, plus a full retrain on
/// `[retrain_start, retrain_start + retrain_days)` when given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayConfig {
    pub strategy: String,
    pub eval_start: u32,
    #[serde(default = "ten")]
    pub eval_days: u32,
    pub delays: Vec<u32>,
    #[serde(default)]
    pub retrain_start: Option<u32>,
    #[serde(default = "seven")]
    pub retrain_days: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitStudyConfig {
    pub strategy: String,
    pub starts: Vec<u32>,
    #[serde(default = "seven")]
    pub base_days: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremPoint {
    pub alpha: f64,
    pub k: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremAnchor {
    /// The base model.
    Base,
    Zero,
}

/// Bound checks on the loss of one batch, starting from `anchor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremConfig {
    pub day: u32,
    #[serde(default = "base_anchor")]
    pub anchor: TheoremAnchor,
    pub points: Vec<TheoremPoint>,
    #[serde(default = "default_solver")]
    pub solver: LbfgsConfig,
}

fn base_anchor() -> TheoremAnchor {
    TheoremAnchor::Base
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafeguardConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default)]
    pub thresholds: SafeguardThresholds,
}

impl Default for SafeguardConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            thresholds: SafeguardThresholds::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        // Data paths are relative to the config file.
        if let DataSource::Files { paths, .. } = &mut cfg.data {
            let dir = path.parent().unwrap_or(Path::new("."));
            for p in paths.iter_mut() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn strategy(&self, label: &str) -> Option<&LabeledStrategy> {
        self.strategies.iter().find(|s| s.label == label)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        if self.strategies.is_empty() && !self.baselines.stale && !self.baselines.moving_window {
            return bad("config needs at least one strategy or baseline".into());
        }
        if self.base.days == 0 {
            return bad("base.days must be >= 1".into());
        }
        if self.baselines.window_days == 0 {
            return bad("baselines.window_days must be >= 1".into());
        }
        match &self.data {
            DataSource::Generated { stream } => stream.validate()?,
            DataSource::Files { paths, .. } if paths.is_empty() => return bad("data.paths is empty".into()),
            DataSource::Files { .. } => {}
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.strategies {
            if s.label.is_empty() || !s.label.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
                return bad(format!("strategy label '{}' must be non-empty [A-Za-z0-9_.-]", s.label));
            }
            if ["stale", "moving_window", "base"].contains(&s.label.as_str()) {
                return bad(format!("strategy label '{}' is reserved", s.label));
            }
            if !seen.insert(&s.label) {
                return bad(format!("duplicate strategy label '{}'", s.label));
            }
            s.strategy.validate()?;
        }
        for c in &self.corruptions {
            c.validate()?;
        }
        if let Some(d) = &self.delay {
            if self.strategy(&d.strategy).is_none() {
                return bad(format!("delay.strategy '{}' is not a configured strategy", d.strategy));
            }
            if d.delays.is_empty() || d.eval_days == 0 {
                return bad("delay needs delays and eval_days >= 1".into());
            }
        }
        if let Some(i) = &self.init_study {
            if self.strategy(&i.strategy).is_none() {
                return bad(format!("init_study.strategy '{}' is not a configured strategy", i.strategy));
            }
            if i.starts.len() < 2 {
                return bad("init_study needs at least two starts".into());
            }
        }
        if let Some(t) = &self.theorem {
            t.solver.validate()?;
            if t.points.iter().any(|p| !(p.alpha >= 0.0 && p.lambda > 0.0 && p.k >= 1)) {
                return bad("theorem points need alpha >= 0, lambda > 0, k >= 1".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, leaving out fields that do not
    /// change results (output directory, worker count, verbosity).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            for k in ["out_dir", "workers", "quiet"] {
                m.remove(k);
            }
        }
        // serde_json maps are ordered by key, so this form is canonical.
        let canonical = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
