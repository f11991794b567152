//! The batch online-learning protocol.
//!
//! Each round evaluates the current model on the incoming batch first and
//! only then trains on it, so a batch is always scored by a model that has
//! not seen it. Two update families are provided:
//!
//! * early stopping (ES): run an iterative optimizer for a fixed number of
//!   passes starting from the previous model;
//! * proximal (Prox): minimize the batch loss plus a quadratic penalty
//!   anchored at the previous model, either with a uniform strength or one
//!   strength per coordinate (including a Fisher-information variant).

mod snapshot;
mod stream;
mod update;

pub use snapshot::{read_snapshot, write_snapshot, Snapshot, SNAPSHOT_MAGIC};
pub use stream::{
    counts_over, run_delay_analysis, run_initialization_study, run_moving_window, run_stale, run_stream, run_stream_from, run_stream_gated,
    train_full, DelayRow, DelayTable, InitSeries, InitStudy, MovingWindowConfig, MovingWindowResult,
    StreamFailure, StreamResult, TrainerConfig,
};
pub use update::{
    es_update, fisher_accumulate, fisher_diag, prox_update, update, EsOutcome, ProxOutcome, RoundState,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::LbfgsConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EsAlgorithm {
    Gd,
    Sgd,
    /// Per-example SGD with `1/n` per-coordinate rates; the learning rate
    /// of the strategy is not used.
    SgdPerCoordinate,
    /// `passes` L-BFGS iterations.
    Lbfgs,
}

/// Early-stopping update: `passes` passes of `algorithm` from the previous
/// model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsStrategy {
    pub algorithm: EsAlgorithm,
    pub learning_rate: f64,
    pub passes: usize,
    #[serde(default = "default_minibatch")]
    pub minibatch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_minibatch() -> usize {
    1000
}

impl EsStrategy {
    pub fn gd(learning_rate: f64, passes: usize) -> Self {
        Self {
            algorithm: EsAlgorithm::Gd,
            learning_rate,
            passes,
            minibatch_size: default_minibatch(),
            seed: 0,
        }
    }

    pub fn sgd(learning_rate: f64, passes: usize, minibatch_size: usize, seed: u64) -> Self {
        Self {
            algorithm: EsAlgorithm::Sgd,
            learning_rate,
            passes,
            minibatch_size,
            seed,
        }
    }
}

/// How the proximal strength is chosen each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProxLambda {
    /// `(λ/2)||w - w_prev||²`
    Uniform { lambda: f64 },
    /// Fixed `Σ λ_r (w_r - w_prev_r)²`, one entry per parameter (bias last).
    PerCoordinate { lambdas: Vec<f64> },
    /// `λ_r = max(floor, scale · A_r)` where `A` accumulates the Fisher
    /// diagonal of past rounds with `A ← decay·A + fisher(batch)`.
    Fisher {
        #[serde(default = "one")]
        decay: f64,
        #[serde(default = "one")]
        floor: f64,
        #[serde(default = "half")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxStrategy {
    pub lambda: ProxLambda,
    #[serde(default)]
    pub lbfgs: LbfgsConfig,
    #[serde(default = "yes")]
    pub regularize_bias: bool,
}

fn yes() -> bool {
    true
}

impl ProxStrategy {
    pub fn uniform(lambda: f64) -> Self {
        Self {
            lambda: ProxLambda::Uniform { lambda },
            lbfgs: LbfgsConfig::default(),
            regularize_bias: true,
        }
    }

    pub fn fisher() -> Self {
        Self {
            lambda: ProxLambda::Fisher {
                decay: 1.0,
                floor: 1.0,
                scale: 0.5,
            },
            lbfgs: LbfgsConfig::default(),
            regularize_bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum UpdateStrategy {
    Es(EsStrategy),
    Prox(ProxStrategy),
}

impl UpdateStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            UpdateStrategy::Es(es) => {
                if !(es.learning_rate.is_finite() && es.learning_rate >= 0.0) {
                    return Err(Error::InvalidConfig(format!("invalid ES learning rate {}", es.learning_rate)));
                }
                if es.passes == 0 || es.minibatch_size == 0 {
                    return Err(Error::InvalidConfig("ES passes and minibatch size must be >= 1".into()));
                }
            }
            UpdateStrategy::Prox(p) => {
                p.lbfgs.validate()?;
                match &p.lambda {
                    ProxLambda::Uniform { lambda } if !(lambda.is_finite() && *lambda > 0.0) => {
                        return Err(Error::InvalidConfig(format!("uniform lambda must be > 0, got {lambda}")));
                    }
                    ProxLambda::PerCoordinate { lambdas } if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) => {
                        return Err(Error::InvalidConfig("per-coordinate lambdas must be >= 0".into()));
                    }
                    ProxLambda::Fisher { decay, floor, scale }
                        if !((0.0..=1.0).contains(decay) && *floor >= 0.0 && *scale >= 0.0) =>
                    {
                        return Err(Error::InvalidConfig("fisher decay must be in [0, 1], floor and scale >= 0".into()));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}
