//! Per-batch evaluation metrics and the day-over-day safeguard checks.
//!
//! RIG follows the usual definition `(LL_model - LL_ctr) / LL_ctr`, so a
//! better model has a *more negative* RIG. Comparisons between two models
//! are reported as a gain `RIG_baseline - RIG_model`, positive when the
//! model improves on the baseline.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{constant_loss, example_loss, Batch, LinearModel};

/// Evaluation of one model on one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub batch_id: u32,
    pub n_examples: usize,
    pub ctr: f64,
    /// Mean per-example log loss of the model.
    pub logloss_model: f64,
    /// Mean per-example log loss of the constant empirical-CTR predictor.
    pub logloss_ctr: f64,
    /// Absent when all labels in the batch agree.
    pub rig: Option<f64>,
    /// Absent when the batch holds a single class.
    pub auc: Option<f64>,
}

impl MetricRecord {
    /// Gain in RIG of `self` over `baseline` (positive = `self` is better).
    pub fn rig_gain_over(&self, baseline: &MetricRecord) -> Option<f64> {
        Some(baseline.rig? - self.rig?)
    }

    pub fn auc_gain_over(&self, baseline: &MetricRecord) -> Option<f64> {
        Some(self.auc? - baseline.auc?)
    }
}

/// Area under the ROC curve from a sort-and-rank pass. Tied scores receive
/// their mid-rank, i.e. a tied positive/negative pair counts one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based: the tie group spans ranks i+1 ..= j
        let mid = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += mid * pos_in_group as f64;
        i = j;
    }
    let n_pos = n_pos as f64;
    Ok((pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

pub fn rig(logloss_model: f64, logloss_ctr: f64) -> Result<f64> {
    if !(logloss_ctr > 0.0) {
        return Err(Error::UndefinedRig);
    }
    Ok((logloss_model - logloss_ctr) / logloss_ctr)
}

/// Summed log loss of predicting the labels' mean for every example.
pub fn empirical_ctr_logloss(labels: &[bool]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let clicks = labels.iter().filter(|&&y| y).count() as f64;
    let ctr = clicks / labels.len() as f64;
    let n = labels.len() as f64;
    clicks * constant_loss(ctr, true) + (n - clicks) * constant_loss(ctr, false)
}

/// Evaluates `model` on `batch`.
pub fn evaluate(model: &LinearModel, batch: &Batch) -> Result<MetricRecord> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    batch.check_dimension(model.dimension())?;
    let labels = batch.labels();
    let margins: Vec<f64> = batch.examples.iter().map(|e| model.margin(&e.features)).collect();
    let n = batch.len() as f64;
    let ll_model = crate::model::chunked_sum(margins.iter().zip(&labels).map(|(&z, &y)| example_loss(z, y))) / n;
    let ll_ctr = empirical_ctr_logloss(&labels) / n;
    Ok(MetricRecord {
        batch_id: batch.id,
        n_examples: batch.len(),
        ctr: batch.ctr(),
        logloss_model: ll_model,
        logloss_ctr: ll_ctr,
        rig: rig(ll_model, ll_ctr).ok(),
        // margins rank identically to probabilities
        auc: auc(&margins, &labels).ok(),
    })
}

/// RIG of several batches taken together: pooled model loss against the
/// pooled per-batch CTR losses.
pub fn pooled_rig<'a>(records: impl IntoIterator<Item = &'a MetricRecord>) -> Option<f64> {
    let (mut model, mut ctr) = (0.0, 0.0);
    for r in records {
        model += r.logloss_model * r.n_examples as f64;
        ctr += r.logloss_ctr * r.n_examples as f64;
    }
    rig(model, ctr).ok()
}

/// Mean of the defined per-batch AUCs.
pub fn mean_auc<'a>(records: impl IntoIterator<Item = &'a MetricRecord>) -> Option<f64> {
    let aucs: Vec<f64> = records.into_iter().filter_map(|r| r.auc).collect();
    if aucs.is_empty() {
        None
    } else {
        Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
    }
}

/// Limits for [`safeguard_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafeguardThresholds {
    /// Largest allowed `|ΔRIG|` between consecutive batches (absolute).
    pub max_delta_rig: f64,
    /// Largest allowed `|ΔAUC|` (absolute; 0.005 is half an AUC point).
    pub max_delta_auc: f64,
    /// Smallest acceptable RIG gain over the stale base model.
    pub min_rig_gain_vs_stale: f64,
    /// Largest acceptable RIG deficit against the moving-window retrain.
    pub max_rig_deficit_vs_window: f64,
    /// Relative band on day-over-day example volume.
    pub volume_band: f64,
    /// Relative band on day-over-day CTR.
    pub ctr_band: f64,
}

impl Default for SafeguardThresholds {
    fn default() -> Self {
        Self {
            max_delta_rig: 0.02,
            max_delta_auc: 0.005,
            min_rig_gain_vs_stale: -0.01,
            max_rig_deficit_vs_window: 0.02,
            volume_band: 0.5,
            ctr_band: 0.3,
        }
    }
}

/// Same-day evaluations of reference models, when available.
#[derive(Debug, Clone, Copy, Default)]
pub struct SafeguardBaselines<'a> {
    pub stale: Option<&'a MetricRecord>,
    pub moving_window: Option<&'a MetricRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeguardCheck {
    pub name: String,
    pub observed: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeguardReport {
    pub batch_id: u32,
    pub checks: Vec<SafeguardCheck>,
    /// Some checks could not run for lack of inputs.
    pub incomplete: bool,
    /// True iff every check that ran passed. A failing report means the
    /// snapshot trained on this batch must not be promoted.
    pub passed: bool,
}

impl SafeguardReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &SafeguardCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn safeguard_check(
    today: &MetricRecord,
    yesterday: &MetricRecord,
    baselines: SafeguardBaselines<'_>,
    thresholds: &SafeguardThresholds,
) -> Result<SafeguardReport> {
    if today.batch_id != yesterday.batch_id + 1 {
        return Err(Error::InvalidConfig(format!(
            "safeguard needs consecutive batches, got {} after {}",
            today.batch_id, yesterday.batch_id
        )));
    }
    let mut checks = Vec::new();
    let mut incomplete = false;
    // `floor` selects a lower bound instead of an upper bound
    let mut add = |name: &str, observed: Option<f64>, threshold: f64, floor: bool| match observed {
        Some(v) => checks.push(SafeguardCheck {
            name: name.to_string(),
            observed: v,
            threshold,
            passed: if floor { v >= threshold } else { v <= threshold },
        }),
        None => incomplete = true,
    };

    let diff = |a: Option<f64>, b: Option<f64>| Some((a? - b?).abs());
    add("delta_rig", diff(today.rig, yesterday.rig), thresholds.max_delta_rig, false);
    add("delta_auc", diff(today.auc, yesterday.auc), thresholds.max_delta_auc, false);
    add(
        "rig_gain_vs_stale",
        baselines.stale.and_then(|s| today.rig_gain_over(s)),
        thresholds.min_rig_gain_vs_stale,
        true,
    );
    add(
        "rig_deficit_vs_window",
        baselines.moving_window.and_then(|m| Some(today.rig? - m.rig?)),
        thresholds.max_rig_deficit_vs_window,
        false,
    );
    let (data, data_incomplete) = data_checks(today, yesterday, thresholds);
    checks.extend(data);
    incomplete |= data_incomplete;

    let passed = checks.iter().all(|c| c.passed);
    Ok(SafeguardReport {
        batch_id: today.batch_id,
        checks,
        incomplete,
        passed,
    })
}

/// The CTR and volume bands alone, against any earlier reference batch.
/// These need no model, so a pipeline can run them before training on a
/// batch. The flag is set when a band could not be evaluated.
pub fn data_checks(
    today: &MetricRecord,
    reference: &MetricRecord,
    thresholds: &SafeguardThresholds,
) -> (Vec<SafeguardCheck>, bool) {
    let relative = |a: f64, b: f64| if b > 0.0 { Some((a / b - 1.0).abs()) } else { None };
    let mut checks = Vec::new();
    let mut incomplete = false;
    for (name, observed, threshold) in [
        ("ctr_change", relative(today.ctr, reference.ctr), thresholds.ctr_band),
        (
            "volume_change",
            relative(today.n_examples as f64, reference.n_examples as f64),
            thresholds.volume_band,
        ),
    ] {
        match observed {
            Some(v) => checks.push(SafeguardCheck {
                name: name.to_string(),
                observed: v,
                threshold,
                passed: v <= threshold,
            }),
            None => incomplete = true,
        }
    }
    (checks, incomplete)
}

/// Gains of one run against the stale base and the moving-window retrain,
/// matched by batch id.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GainColumns {
    pub rig_gain_vs_stale: Option<f64>,
    pub auc_gain_vs_stale: Option<f64>,
    pub rig_gain_vs_window: Option<f64>,
    pub auc_gain_vs_window: Option<f64>,
}

pub const METRIC_COLUMNS: [&str; 7] = ["batch_id", "n", "ctr", "logloss_model", "logloss_ctr", "rig", "auc"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes records in the fixed column order of [`METRIC_COLUMNS`], followed
/// by gain columns for each baseline that is present.
pub fn write_metrics_csv<W: Write>(
    out: W,
    records: &[MetricRecord],
    stale: Option<&[MetricRecord]>,
    window: Option<&[MetricRecord]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = METRIC_COLUMNS.to_vec();
    if stale.is_some() {
        header.extend(["rig_gain_vs_stale", "auc_gain_vs_stale"]);
    }
    if window.is_some() {
        header.extend(["rig_gain_vs_window", "auc_gain_vs_window"]);
    }
    w.write_record(&header)?;
    let find = |set: &[MetricRecord], id: u32| set.iter().find(|r| r.batch_id == id).cloned();
    for r in records {
        let mut row = vec![
            r.batch_id.to_string(),
            r.n_examples.to_string(),
            r.ctr.to_string(),
            r.logloss_model.to_string(),
            r.logloss_ctr.to_string(),
            fmt_opt(r.rig),
            fmt_opt(r.auc),
        ];
        for base in [stale, window].into_iter().flatten() {
            let b = find(base, r.batch_id);
            row.push(fmt_opt(b.as_ref().and_then(|b| r.rig_gain_over(b))));
            row.push(fmt_opt(b.as_ref().and_then(|b| r.auc_gain_over(b))));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the leading metric columns back; gain columns are ignored.
pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.len() < METRIC_COLUMNS.len() || header.iter().zip(METRIC_COLUMNS).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected metric CSV header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |m: &str| Error::Parse {
            line,
            message: m.to_string(),
        };
        let num = |k: usize| -> Result<f64> { row[k].parse().map_err(|_| bad(METRIC_COLUMNS[k])) };
        let opt = |k: usize| -> Result<Option<f64>> {
            if row[k].is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };
        out.push(MetricRecord {
            batch_id: row[0].parse().map_err(|_| bad("batch_id"))?,
            n_examples: row[1].parse().map_err(|_| bad("n"))?,
            ctr: num(2)?,
            logloss_model: num(3)?,
            logloss_ctr: num(4)?,
            rig: opt(5)?,
            auc: opt(6)?,
        });
    }
    Ok(out)
}

pub fn write_safeguards_csv<W: Write>(out: W, reports: &[SafeguardReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["batch_id", "check", "observed", "threshold", "passed", "report_passed", "incomplete"])?;
    for r in reports {
        for c in &r.checks {
            w.write_record([
                r.batch_id.to_string(),
                c.name.clone(),
                c.observed.to_string(),
                c.threshold.to_string(),
                c.passed.to_string(),
                r.passed.to_string(),
                r.incomplete.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
