use serde::{Deserialize, Serialize};

use super::snapshot::Snapshot;
use super::update::{update, RoundState};
use super::UpdateStrategy;
use crate::error::{Error, Result};
use crate::metrics::{data_checks, evaluate, mean_auc, pooled_rig, MetricRecord, SafeguardThresholds};
use crate::model::{Batch, LinearModel, LogisticObjective};
use crate::optim::{lbfgs_minimize, LbfgsConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamFailure {
    pub batch_id: u32,
    pub message: String,
}

/// Output of a progressive-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    /// `records[i]` scores batch `i` with the model trained through batch
    /// `i - 1` (the initial model for the first batch).
    pub records: Vec<MetricRecord>,
    pub initial: Snapshot,
    /// One snapshot per completed update, in batch order.
    pub snapshots: Vec<Snapshot>,
    /// Set when an update failed; the run stops at that batch.
    pub failure: Option<StreamFailure>,
    /// Batches that failed the data checks and were not trained on. Their
    /// snapshot repeats the previous model.
    #[serde(default)]
    pub quarantined: Vec<u32>,
}

impl StreamResult {
    /// The model that scored `batch_id`.
    pub fn model_before(&self, batch_id: u32) -> Option<&LinearModel> {
        let pos = self.records.iter().position(|r| r.batch_id == batch_id)?;
        if pos == 0 {
            Some(&self.initial.model)
        } else {
            self.snapshots.get(pos - 1).map(|s| &s.model)
        }
    }

    pub fn snapshot_through(&self, batch_id: u32) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.batch_id == Some(batch_id))
    }

    pub fn record(&self, batch_id: u32) -> Option<&MetricRecord> {
        self.records.iter().find(|r| r.batch_id == batch_id)
    }
}

fn check_ids(batches: &[Batch]) -> Result<()> {
    if batches.is_empty() {
        return Err(Error::InvalidConfig("no batches to replay".into()));
    }
    for pair in batches.windows(2) {
        if pair[1].id <= pair[0].id {
            return Err(Error::InvalidConfig(format!(
                "batch ids must increase, got {} after {}",
                pair[1].id, pair[0].id
            )));
        }
    }
    Ok(())
}

pub fn run_stream(batches: &[Batch], initial: &LinearModel, strategy: &UpdateStrategy) -> Result<StreamResult> {
    run_stream_from(batches, Snapshot::initial(initial.clone()), strategy)
}

/// Replays `batches` starting from a snapshot that may carry learner state
/// (per-coordinate counts or accumulated Fisher information).
pub fn run_stream_from(batches: &[Batch], initial: Snapshot, strategy: &UpdateStrategy) -> Result<StreamResult> {
    replay(batches, initial, strategy, None)
}

/// Like [`run_stream_from`], but a batch whose CTR or volume leaves the bands
/// relative to the last batch trained on is scored and then skipped.
pub fn run_stream_gated(
    batches: &[Batch],
    initial: Snapshot,
    strategy: &UpdateStrategy,
    thresholds: &SafeguardThresholds,
) -> Result<StreamResult> {
    replay(batches, initial, strategy, Some(thresholds))
}

fn replay(
    batches: &[Batch],
    initial: Snapshot,
    strategy: &UpdateStrategy,
    gate: Option<&SafeguardThresholds>,
) -> Result<StreamResult> {
    check_ids(batches)?;
    strategy.validate()?;
    let mut result = StreamResult {
        records: Vec::with_capacity(batches.len()),
        initial: initial.clone(),
        snapshots: Vec::with_capacity(batches.len()),
        failure: None,
        quarantined: Vec::new(),
    };
    let mut model = initial.model;
    let mut state = initial.state;
    let mut reference: Option<MetricRecord> = None;
    for batch in batches {
        let rec = match evaluate(&model, batch) {
            Ok(rec) => rec,
            Err(e) => {
                result.failure = Some(StreamFailure {
                    batch_id: batch.id,
                    message: e.in_batch(batch.id).to_string(),
                });
                break;
            }
        };
        let blocked = match (gate, &reference) {
            (Some(t), Some(r)) => data_checks(&rec, r, t).0.iter().any(|c| !c.passed),
            _ => false,
        };
        if gate.is_some() && !blocked {
            reference = Some(rec.clone());
        }
        result.records.push(rec);
        if blocked {
            result.quarantined.push(batch.id);
            result.snapshots.push(Snapshot {
                model: model.clone(),
                batch_id: Some(batch.id),
                state: state.clone(),
            });
            continue;
        }
        match update(&model, batch, strategy, &state) {
            Ok((next, next_state)) => {
                model = next;
                state = next_state;
                result.snapshots.push(Snapshot {
                    model: model.clone(),
                    batch_id: Some(batch.id),
                    state: state.clone(),
                });
            }
            Err(e) => {
                result.failure = Some(StreamFailure {
                    batch_id: batch.id,
                    message: e.to_string(),
                });
                break;
            }
        }
    }
    Ok(result)
}

/// Scores every batch with a fixed model.
pub fn run_stale(batches: &[Batch], model: &LinearModel) -> Result<Vec<MetricRecord>> {
    batches.iter().map(|b| evaluate(model, b).map_err(|e| e.in_batch(b.id))).collect()
}

/// Full training from scratch: L-BFGS on the summed log loss with a small
/// ridge term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub ridge: f64,
    pub lbfgs: LbfgsConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            lbfgs: LbfgsConfig {
                memory: 10,
                // absolute, on a loss summed over every example in the window
                gradient_tolerance: 1e-3,
                max_iterations: 500,
            },
        }
    }
}

/// Fits a model from zero on the concatenation of `batches`.
pub fn train_full<'a, I>(batches: I, dimension: usize, cfg: &TrainerConfig) -> Result<LinearModel>
where
    I: IntoIterator<Item = &'a Batch>,
{
    let objective = LogisticObjective::over_batches(batches, dimension, cfg.ridge)?;
    let r = lbfgs_minimize(&objective, &vec![0.0; dimension + 1], &cfg.lbfgs)?;
    Ok(LinearModel::from_params(&r.w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingWindowConfig {
    pub window_days: u32,
    pub trainer: TrainerConfig,
    /// Skip evaluation of batches before this id.
    pub first_eval: Option<u32>,
}

impl Default for MovingWindowConfig {
    fn default() -> Self {
        Self {
            window_days: 7,
            trainer: TrainerConfig::default(),
            first_eval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingWindowResult {
    pub records: Vec<MetricRecord>,
    /// Batches without a full window of history.
    pub skipped: Vec<u32>,
    /// Model used for each record, aligned with `records`.
    pub models: Vec<LinearModel>,
}

/// Daily full retrain on the previous `window_days` batches (by id),
/// evaluated on the next batch. Each retrain starts from zero.
pub fn run_moving_window(batches: &[Batch], dimension: usize, cfg: &MovingWindowConfig) -> Result<MovingWindowResult> {
    check_ids(batches)?;
    if cfg.window_days == 0 {
        return Err(Error::InvalidConfig("window_days must be >= 1".into()));
    }
    let mut out = MovingWindowResult {
        records: Vec::new(),
        skipped: Vec::new(),
        models: Vec::new(),
    };
    for (i, batch) in batches.iter().enumerate() {
        if cfg.first_eval.is_some_and(|f| batch.id < f) {
            continue;
        }
        let lo = batch.id.checked_sub(cfg.window_days);
        let window: Vec<&Batch> = match lo {
            Some(lo) => batches[..i].iter().filter(|b| b.id >= lo).collect(),
            None => Vec::new(),
        };
        if window.len() < cfg.window_days as usize {
            out.skipped.push(batch.id);
            continue;
        }
        let model = train_full(window, dimension, &cfg.trainer).map_err(|e| e.in_batch(batch.id))?;
        out.records.push(evaluate(&model, batch).map_err(|e| e.in_batch(batch.id))?);
        out.models.push(model);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRow {
    pub label: String,
    /// Days between the snapshot's last training batch and the start of the
    /// evaluation window; `None` for the baseline row.
    pub delay: Option<u32>,
    pub trained_through: Option<u32>,
    /// False when no snapshot exists for the requested delay.
    pub present: bool,
    pub mean_auc: Option<f64>,
    pub pooled_rig: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTable {
    pub eval_start: u32,
    pub eval_end: u32,
    pub rows: Vec<DelayRow>,
}

impl DelayTable {
    pub fn row(&self, delay: u32) -> Option<&DelayRow> {
        self.rows.iter().find(|r| r.delay == Some(delay))
    }

    pub fn baseline(&self) -> Option<&DelayRow> {
        self.rows.iter().find(|r| r.delay.is_none())
    }
}

/// Scores the snapshot trained through `eval_start - delay` for each delay
/// on the same evaluation batches, plus an optional baseline model.
pub fn run_delay_analysis(
    snapshots: &[Snapshot],
    eval_batches: &[Batch],
    delays: &[u32],
    baseline: Option<(&str, &LinearModel)>,
) -> Result<DelayTable> {
    check_ids(eval_batches)?;
    let eval_start = eval_batches[0].id;
    let eval_end = eval_batches.last().unwrap().id;
    let score = |model: &LinearModel| -> Result<(Option<f64>, Option<f64>)> {
        let recs = run_stale(eval_batches, model)?;
        Ok((mean_auc(&recs), pooled_rig(&recs)))
    };
    let mut rows = Vec::new();
    for &delay in delays {
        let target = eval_start.checked_sub(delay);
        let snap = target.and_then(|t| snapshots.iter().find(|s| s.batch_id == Some(t)));
        let (auc, rig) = match snap {
            Some(s) => score(&s.model)?,
            None => (None, None),
        };
        rows.push(DelayRow {
            label: format!("delay_{delay}"),
            delay: Some(delay),
            trained_through: target,
            present: snap.is_some(),
            mean_auc: auc,
            pooled_rig: rig,
        });
    }
    if let Some((label, model)) = baseline {
        let (auc, rig) = score(model)?;
        rows.push(DelayRow {
            label: label.to_string(),
            delay: None,
            trained_through: None,
            present: true,
            mean_auc: auc,
            pooled_rig: rig,
        });
    }
    Ok(DelayTable {
        eval_start,
        eval_end,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSeries {
    /// First batch scored by this run.
    pub start: u32,
    pub records: Vec<MetricRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitStudy {
    pub series: Vec<InitSeries>,
}

impl InitStudy {
    /// First batch scored by every run.
    pub fn first_common(&self) -> Option<u32> {
        self.series.iter().map(|s| s.start).max()
    }

    /// `max - min` of RIG across runs on `batch_id`.
    pub fn rig_spread(&self, batch_id: u32) -> Option<f64> {
        let rigs: Vec<f64> = self
            .series
            .iter()
            .map(|s| s.records.iter().find(|r| r.batch_id == batch_id).and_then(|r| r.rig))
            .collect::<Option<_>>()?;
        let max = rigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = rigs.iter().cloned().fold(f64::INFINITY, f64::min);
        Some(max - min)
    }
}

/// For each start `s`, trains a base model on the `base_days` batches before
/// `s` and runs online learning from `s` to the end of the stream.
pub fn run_initialization_study(
    batches: &[Batch],
    starts: &[u32],
    base_days: u32,
    dimension: usize,
    strategy: &UpdateStrategy,
    trainer: &TrainerConfig,
) -> Result<InitStudy> {
    check_ids(batches)?;
    if starts.len() < 2 {
        return Err(Error::InvalidConfig("initialization study needs at least two starts".into()));
    }
    let mut series = Vec::with_capacity(starts.len());
    for &start in starts {
        let lo = start.checked_sub(base_days).ok_or_else(|| {
            Error::InvalidConfig(format!("start {start} leaves no room for {base_days} base days"))
        })?;
        let window: Vec<&Batch> = batches.iter().filter(|b| b.id >= lo && b.id < start).collect();
        if window.is_empty() {
            return Err(Error::InvalidConfig(format!("no base data before start {start}")));
        }
        let base = train_full(window, dimension, trainer)?;
        let rest: Vec<Batch> = Vec::new();
        let tail = match batches.iter().position(|b| b.id >= start) {
            Some(p) => &batches[p..],
            None => &rest[..],
        };
        let run = run_stream_from(tail, Snapshot::initial(base), strategy)?;
        if let Some(f) = run.failure {
            return Err(Error::InvalidConfig(format!("run from {start} failed at batch {}: {}", f.batch_id, f.message)));
        }
        series.push(InitSeries {
            start,
            records: run.records,
        });
    }
    Ok(InitStudy { series })
}

/// Learner state to start a per-coordinate-rate run from: counts of every
/// coordinate over the base window.
pub fn counts_over<'a, I>(batches: I, dimension: usize) -> Result<RoundState>
where
    I: IntoIterator<Item = &'a Batch>,
{
    let objective = LogisticObjective::over_batches(batches, dimension, 0.0)?;
    let mut counts = crate::optim::PerCoordState::new(dimension + 1);
    counts.observe(&objective);
    Ok(RoundState {
        counts: Some(counts),
        fisher: None,
    })
}
