//! Experiment orchestration and output layout.
//!
//! ```text
//! <out>/config.toml                 resolved configuration
//! <out>/metrics/<label>.csv         per-batch records with gain columns
//! <out>/summary.csv                 one row per run
//! <out>/safeguards/<label>.csv
//! <out>/bounds.csv                  bound checks
//! <out>/delay.csv
//! <out>/init_study.csv
//! <out>/snapshots/...               every model that produced a record
//! <out>/manifest.json               written last
//! ```
//!
//! Everything except `manifest.json` is a deterministic function of the
//! configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataSource, ExperimentConfig, LabeledStrategy, TheoremAnchor};
use super::format::parse_examples;
use crate::datagen::{generate_stream_parallel, inject_corruption, GroundTruth};
use crate::error::{Error, Result};
use crate::learner::{
    read_snapshot, run_delay_analysis, run_moving_window, run_stale, run_stream_from, run_stream_gated, train_full, write_snapshot,
    DelayTable, InitSeries, InitStudy, MovingWindowConfig, Snapshot, StreamResult, TrainerConfig, UpdateStrategy,
};
use crate::metrics::{
    evaluate, mean_auc, pooled_rig, read_metrics_csv, safeguard_check, write_metrics_csv, write_safeguards_csv,
    MetricRecord, SafeguardBaselines, SafeguardReport,
};
use crate::model::{Batch, LinearModel, LogisticObjective};
use crate::seed::derive_seed;
use crate::theory::{theorem1_check, write_bounds_csv, BoundReport};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Batches an experiment runs on, after corruption.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub batches: Vec<Batch>,
    pub dimension: usize,
    pub truth: Option<GroundTruth>,
}

impl LoadedData {
    pub fn range(&self, start: u32, days: u32) -> Vec<&Batch> {
        self.batches
            .iter()
            .filter(|b| b.id >= start && b.id < start.saturating_add(days))
            .collect()
    }

    pub fn from_id(&self, start: u32) -> &[Batch] {
        let p = self.batches.iter().position(|b| b.id >= start).unwrap_or(self.batches.len());
        &self.batches[p..]
    }
}

/// Generates or parses the configured data and applies corruptions.
pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let (mut batches, dimension, truth) = match &cfg.data {
        DataSource::Generated { stream } => {
            let mut spec = stream.clone();
            spec.seed = cfg.seed;
            let (b, t) = generate_stream_parallel(&spec, cfg.workers)?;
            (b, spec.dimension, Some(t))
        }
        DataSource::Files { paths, dimension } => {
            let mut all: Vec<Batch> = Vec::new();
            for p in paths {
                let part = parse_examples(p)?;
                if let (Some(a), Some(b)) = (all.last(), part.first()) {
                    if b.id <= a.id {
                        return Err(Error::InvalidConfig(format!(
                            "{} starts at day {} after day {}",
                            p.display(),
                            b.id,
                            a.id
                        )));
                    }
                }
                all.extend(part);
            }
            let inferred = all
                .iter()
                .flat_map(|b| b.examples.iter().map(|e| e.features.min_dimension()))
                .max()
                .unwrap_or(0);
            let d = dimension.unwrap_or(inferred);
            for b in &all {
                b.check_dimension(d)?;
            }
            (all, d, None)
        }
    };
    for c in &cfg.corruptions {
        batches = inject_corruption(&batches, c, cfg.seed)?;
    }
    Ok(LoadedData {
        batches,
        dimension,
        truth,
    })
}

/// Full training on a non-empty window.
pub fn train_base(window: &[&Batch], dimension: usize, trainer: &TrainerConfig) -> Result<LinearModel> {
    if window.iter().all(|b| b.is_empty()) {
        return Err(Error::EmptyBatch);
    }
    train_full(window.iter().copied(), dimension, trainer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub label: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub runs: Vec<RunStatus>,
    pub theorem_checks: usize,
    pub theorem_violations: usize,
    pub outputs: Vec<OutputEntry>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn any_run_failed(&self) -> bool {
        self.runs.iter().any(|r| !r.ok)
    }

    /// Process exit code: 3 on a guaranteed-mode bound violation, 1 on a
    /// failed run, 0 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.theorem_violations > 0 {
            3
        } else if self.any_run_failed() {
            1
        } else {
            0
        }
    }

    pub fn read(out: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE))?)?)
    }
}

/// Which parts of an experiment to execute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub baselines: bool,
    /// Strategy labels to run; `None` runs all of them.
    pub strategies: Option<Vec<String>>,
    pub delay: bool,
    pub init_study: bool,
    pub theorem: bool,
    pub safeguards: bool,
}

impl Plan {
    pub fn all() -> Self {
        Self {
            baselines: true,
            strategies: None,
            delay: true,
            init_study: true,
            theorem: true,
            safeguards: true,
        }
    }

    fn none() -> Self {
        Self {
            baselines: false,
            strategies: Some(Vec::new()),
            delay: false,
            init_study: false,
            theorem: false,
            safeguards: false,
        }
    }

    pub fn delay_only(cfg: &ExperimentConfig) -> Result<Self> {
        let d = cfg
            .delay
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("config has no [delay] section".into()))?;
        Ok(Self {
            strategies: Some(vec![d.strategy.clone()]),
            delay: true,
            ..Self::none()
        })
    }

    pub fn init_only(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.init_study
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("config has no [init_study] section".into()))?;
        Ok(Self {
            init_study: true,
            ..Self::none()
        })
    }

    pub fn theorem_only(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.theorem
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("config has no [theorem] section".into()))?;
        Ok(Self {
            theorem: true,
            ..Self::none()
        })
    }
}

/// Collects output files and their hashes.
struct Outputs {
    root: PathBuf,
    entries: BTreeMap<String, String>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        // A stale manifest would claim a completed run.
        let m = root.join(MANIFEST_FILE);
        if m.exists() {
            fs::remove_file(m)?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            entries: BTreeMap::new(),
        })
    }

    fn put(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, bytes)?;
        self.entries.insert(rel.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn put_with(&mut self, rel: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.put(rel, &buf)
    }

    fn snapshot(&mut self, rel: &str, s: &Snapshot) -> Result<()> {
        self.put_with(rel, |b| write_snapshot(b, s))
    }
}

fn snapshot_name(dir: &str, id: u32) -> String {
    format!("snapshots/{dir}/after_{id:05}.snap")
}

fn initial_name(dir: &str) -> String {
    format!("snapshots/{dir}/initial.snap")
}

fn window_name(id: u32) -> String {
    format!("snapshots/moving_window/for_{id:05}.snap")
}

enum Job {
    Stale,
    MovingWindow,
    Strategy(usize),
    Init(usize),
    Theorem(usize),
}

enum JobOut {
    Records(Vec<MetricRecord>),
    Window(Vec<MetricRecord>, Vec<LinearModel>),
    Stream(StreamResult),
    Init(LinearModel, StreamResult),
    Bound(Result<BoundReport>),
}

/// Runs `jobs` on up to `workers` threads; results come back in job order.
fn run_jobs<F>(jobs: &[Job], workers: usize, f: F) -> Vec<Result<JobOut>>
where
    F: Fn(&Job) -> Result<JobOut> + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<JobOut>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                let out = f(&jobs[i]);
                slots.lock().expect("result lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|o| o.expect("every job ran"))
        .collect()
}

fn log(cfg: &ExperimentConfig, msg: impl AsRef<str>) {
    if !cfg.quiet {
        eprintln!("[batchol] {}", msg.as_ref());
    }
}

fn replay(
    cfg: &ExperimentConfig,
    s: &LabeledStrategy,
    batches: &[Batch],
    initial: Snapshot,
    strategy: &UpdateStrategy,
) -> Result<StreamResult> {
    if s.quarantine {
        run_stream_gated(batches, initial, strategy, &cfg.safeguards.thresholds)
    } else {
        run_stream_from(batches, initial, strategy)
    }
}

fn seeded(strategy: &UpdateStrategy, master: u64, label: &str) -> UpdateStrategy {
    let mut s = strategy.clone();
    if let UpdateStrategy::Es(es) = &mut s {
        es.seed = derive_seed(master, &format!("strategy/{label}"), 0);
    }
    s
}

/// Runs the full experiment into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    run_plan(cfg, out, &Plan::all())
}

pub fn run_plan(cfg: &ExperimentConfig, out: &Path, plan: &Plan) -> Result<RunManifest> {
    cfg.validate()?;
    let started = Instant::now();
    let mut outputs = Outputs::new(out)?;
    outputs.put("config.toml", cfg.to_toml()?.as_bytes())?;

    let data = load_data(cfg)?;
    log(cfg, format!("{} batches, dimension {}", data.batches.len(), data.dimension));
    let d = data.dimension;
    let base_window = data.range(cfg.base.start, cfg.base.days);
    let base = train_base(&base_window, d, &cfg.base.trainer)?;
    outputs.snapshot("snapshots/base.snap", &Snapshot::initial(base.clone()))?;
    let online = data.from_id(cfg.base.first_online());
    if online.is_empty() && (plan.baselines || plan.strategies.as_ref().is_none_or(|s| !s.is_empty())) {
        return Err(Error::InvalidConfig("no batches after the base window".into()));
    }

    let selected: Vec<usize> = cfg
        .strategies
        .iter()
        .enumerate()
        .filter(|(_, s)| plan.strategies.as_ref().is_none_or(|l| l.contains(&s.label)))
        .map(|(i, _)| i)
        .collect();
    let mut jobs = Vec::new();
    if plan.baselines && cfg.baselines.stale {
        jobs.push(Job::Stale);
    }
    if plan.baselines && cfg.baselines.moving_window {
        jobs.push(Job::MovingWindow);
    }
    jobs.extend(selected.iter().map(|&i| Job::Strategy(i)));
    let init = cfg.init_study.as_ref().filter(|_| plan.init_study);
    if let Some(init) = init {
        jobs.extend((0..init.starts.len()).map(Job::Init));
    }
    let theorem = cfg.theorem.as_ref().filter(|_| plan.theorem);
    if let Some(t) = theorem {
        jobs.extend((0..t.points.len()).map(Job::Theorem));
    }

    let theorem_batch = match theorem {
        Some(t) => Some(
            data.batches
                .iter()
                .find(|b| b.id == t.day)
                .ok_or(Error::InvalidDay { day: t.day })?,
        ),
        None => None,
    };

    let results = run_jobs(&jobs, cfg.workers, |job| match job {
        Job::Stale => Ok(JobOut::Records(run_stale(online, &base)?)),
        Job::MovingWindow => {
            let mw = run_moving_window(
                &data.batches,
                d,
                &MovingWindowConfig {
                    window_days: cfg.baselines.window_days,
                    trainer: cfg.base.trainer,
                    first_eval: Some(cfg.base.first_online()),
                },
            )?;
            Ok(JobOut::Window(mw.records, mw.models))
        }
        Job::Strategy(i) => {
            let s = &cfg.strategies[*i];
            log(cfg, format!("running {}", s.label));
            let strategy = seeded(&s.strategy, cfg.seed, &s.label);
            Ok(JobOut::Stream(replay(cfg, s, online, Snapshot::initial(base.clone()), &strategy)?))
        }
        Job::Init(i) => {
            let init = init.expect("init job implies config");
            let start = init.starts[*i];
            let lo = start.checked_sub(init.base_days).ok_or_else(|| {
                Error::InvalidConfig(format!("init start {start} leaves no room for {} base days", init.base_days))
            })?;
            let m = train_base(&data.range(lo, init.base_days), d, &cfg.base.trainer)?;
            let s = cfg.strategy(&init.strategy).expect("validated");
            let strategy = seeded(&s.strategy, cfg.seed, &s.label);
            let run = replay(cfg, s, data.from_id(start), Snapshot::initial(m.clone()), &strategy)?;
            Ok(JobOut::Init(m, run))
        }
        Job::Theorem(i) => {
            let t = theorem.expect("theorem job implies config");
            let p = t.points[*i];
            let f = LogisticObjective::new(theorem_batch.expect("theorem batch"), d)?;
            let w0 = match t.anchor {
                TheoremAnchor::Base => base.params(),
                TheoremAnchor::Zero => vec![0.0; d + 1],
            };
            Ok(JobOut::Bound(theorem1_check(&f, &w0, p.alpha, p.k, p.lambda, &t.solver)))
        }
    });

    let mut runs = Vec::new();
    let mut stale: Option<Vec<MetricRecord>> = None;
    let mut window: Option<Vec<MetricRecord>> = None;
    let mut streams: Vec<(String, StreamResult)> = Vec::new();
    let mut init_runs: Vec<(u32, LinearModel, StreamResult)> = Vec::new();
    let mut bounds: Vec<(String, BoundReport)> = Vec::new();
    let mut theorem_failures = Vec::new();
    for (job, res) in jobs.iter().zip(results) {
        let label = match job {
            Job::Stale => "stale".to_string(),
            Job::MovingWindow => "moving_window".to_string(),
            Job::Strategy(i) => cfg.strategies[*i].label.clone(),
            Job::Init(i) => format!("init_{}", init.expect("init").starts[*i]),
            Job::Theorem(i) => {
                let p = theorem.expect("theorem").points[*i];
                format!("a{}_k{}_l{}", p.alpha, p.k, p.lambda)
            }
        };
        match res {
            Err(e) => {
                // Configuration problems abort the whole run.
                if matches!(e, Error::InvalidConfig(_) | Error::InvalidDay { .. }) {
                    return Err(e);
                }
                runs.push(RunStatus {
                    label,
                    ok: false,
                    failure: Some(e.to_string()),
                });
            }
            Ok(out) => {
                let mut failure = None;
                match out {
                    JobOut::Records(r) => stale = Some(r),
                    JobOut::Window(r, models) => {
                        for (rec, m) in r.iter().zip(&models) {
                            outputs.snapshot(&window_name(rec.batch_id), &Snapshot::initial(m.clone()))?;
                        }
                        window = Some(r);
                    }
                    JobOut::Stream(s) => {
                        failure = s.failure.as_ref().map(|f| format!("batch {}: {}", f.batch_id, f.message));
                        streams.push((label.clone(), s));
                    }
                    JobOut::Init(m, s) => {
                        failure = s.failure.as_ref().map(|f| format!("batch {}: {}", f.batch_id, f.message));
                        let start = init.expect("init").starts[match job {
                            Job::Init(i) => *i,
                            _ => unreachable!(),
                        }];
                        init_runs.push((start, m, s));
                    }
                    JobOut::Bound(r) => match r {
                        Ok(b) => {
                            if b.violates_guarantee() {
                                theorem_failures.push(label.clone());
                            }
                            bounds.push((label.clone(), b));
                        }
                        Err(e) => failure = Some(e.to_string()),
                    },
                }
                runs.push(RunStatus {
                    ok: failure.is_none(),
                    label,
                    failure,
                });
            }
        }
    }

    // Per-run metrics and snapshots.
    if let Some(s) = &stale {
        outputs.put_with("metrics/stale.csv", |b| write_metrics_csv(b, s, stale.as_deref(), window.as_deref()))?;
    }
    if let Some(w) = &window {
        outputs.put_with("metrics/moving_window.csv", |b| {
            write_metrics_csv(b, w, stale.as_deref(), window.as_deref())
        })?;
    }
    for (label, s) in &streams {
        outputs.put_with(&format!("metrics/{label}.csv"), |b| {
            write_metrics_csv(b, &s.records, stale.as_deref(), window.as_deref())
        })?;
        outputs.snapshot(&initial_name(label), &s.initial)?;
        for snap in &s.snapshots {
            outputs.snapshot(&snapshot_name(label, snap.batch_id.expect("online snapshot")), snap)?;
        }
    }
    let mut summary: Vec<(String, &[MetricRecord])> = Vec::new();
    if let Some(s) = &stale {
        summary.push(("stale".into(), s));
    }
    if let Some(w) = &window {
        summary.push(("moving_window".into(), w));
    }
    for (label, s) in &streams {
        summary.push((label.clone(), &s.records));
    }
    if !summary.is_empty() {
        outputs.put_with("summary.csv", |b| write_summary(b, &summary, stale.as_deref()))?;
    }

    if plan.safeguards && cfg.safeguards.enabled {
        for (label, s) in &streams {
            let reports = safeguards(&s.records, stale.as_deref(), window.as_deref(), cfg)?;
            outputs.put_with(&format!("safeguards/{label}.csv"), |b| write_safeguards_csv(b, &reports))?;
        }
    }

    if let (true, Some(dc)) = (plan.delay, &cfg.delay) {
        if let Some((_, run)) = streams.iter().find(|(l, _)| *l == dc.strategy) {
            let eval: Vec<Batch> = data.range(dc.eval_start, dc.eval_days).into_iter().cloned().collect();
            if eval.is_empty() {
                return Err(Error::InvalidConfig("delay evaluation window has no batches".into()));
            }
            let retrain = match dc.retrain_start {
                Some(r) => {
                    let m = train_base(&data.range(r, dc.retrain_days), d, &cfg.base.trainer)?;
                    outputs.snapshot("snapshots/delay_retrain.snap", &Snapshot::initial(m.clone()))?;
                    Some(m)
                }
                None => None,
            };
            let table = run_delay_analysis(
                &run.snapshots,
                &eval,
                &dc.delays,
                retrain.as_ref().map(|m| ("retrain", m)),
            )?;
            outputs.put_with("delay.csv", |b| write_delay_csv(b, &table))?;
        }
    }

    if !init_runs.is_empty() {
        init_runs.sort_by_key(|r| r.0);
        for (start, m, run) in &init_runs {
            let dir = format!("init_{start}");
            outputs.snapshot(&initial_name(&dir), &Snapshot::initial(m.clone()))?;
            for snap in &run.snapshots {
                outputs.snapshot(&snapshot_name(&dir, snap.batch_id.expect("online snapshot")), snap)?;
            }
        }
        let study = InitStudy {
            series: init_runs
                .iter()
                .map(|(start, _, run)| InitSeries {
                    start: *start,
                    records: run.records.clone(),
                })
                .collect(),
        };
        outputs.put_with("init_study.csv", |b| write_init_csv(b, &study))?;
    }

    if !bounds.is_empty() {
        outputs.put_with("bounds.csv", |b| write_bounds_csv(b, &bounds))?;
    }
    for l in &theorem_failures {
        log(cfg, format!("bound violated in guaranteed mode: {l}"));
    }

    let manifest = RunManifest {
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        runs,
        theorem_checks: bounds.len(),
        theorem_violations: theorem_failures.len(),
        outputs: outputs
            .entries
            .iter()
            .map(|(p, h)| OutputEntry {
                path: p.clone(),
                sha256: h.clone(),
            })
            .collect(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    log(cfg, format!("done in {:.1}s", manifest.wall_clock_seconds));
    Ok(manifest)
}

fn safeguards(
    records: &[MetricRecord],
    stale: Option<&[MetricRecord]>,
    window: Option<&[MetricRecord]>,
    cfg: &ExperimentConfig,
) -> Result<Vec<SafeguardReport>> {
    fn find(set: Option<&[MetricRecord]>, id: u32) -> Option<&MetricRecord> {
        set.and_then(|s| s.iter().find(|r| r.batch_id == id))
    }
    records
        .windows(2)
        .filter(|p| p[1].batch_id == p[0].batch_id + 1)
        .map(|p| {
            safeguard_check(
                &p[1],
                &p[0],
                SafeguardBaselines {
                    stale: find(stale, p[1].batch_id),
                    moving_window: find(window, p[1].batch_id),
                },
                &cfg.safeguards.thresholds,
            )
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Pooled RIG gain of `records` over `base` on the batches both cover.
pub fn pooled_gain(records: &[MetricRecord], base: &[MetricRecord]) -> Option<f64> {
    let common: Vec<(&MetricRecord, &MetricRecord)> = records
        .iter()
        .filter_map(|r| base.iter().find(|b| b.batch_id == r.batch_id).map(|b| (r, b)))
        .collect();
    Some(pooled_rig(common.iter().map(|p| p.1))? - pooled_rig(common.iter().map(|p| p.0))?)
}

fn write_summary(out: &mut Vec<u8>, runs: &[(String, &[MetricRecord])], stale: Option<&[MetricRecord]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "label",
        "first_batch",
        "last_batch",
        "batches",
        "pooled_rig",
        "mean_auc",
        "pooled_rig_gain_vs_stale",
    ])?;
    for (label, r) in runs {
        w.write_record([
            label.clone(),
            r.first().map(|x| x.batch_id.to_string()).unwrap_or_default(),
            r.last().map(|x| x.batch_id.to_string()).unwrap_or_default(),
            r.len().to_string(),
            opt(pooled_rig(r.iter())),
            opt(mean_auc(r.iter())),
            opt(stale.and_then(|s| pooled_gain(r, s))),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_delay_csv<W: std::io::Write>(out: W, t: &DelayTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "delay", "trained_through", "present", "eval_start", "eval_end", "mean_auc", "pooled_rig"])?;
    for r in &t.rows {
        w.write_record([
            r.label.clone(),
            r.delay.map(|x| x.to_string()).unwrap_or_default(),
            r.trained_through.map(|x| x.to_string()).unwrap_or_default(),
            r.present.to_string(),
            t.eval_start.to_string(),
            t.eval_end.to_string(),
            opt(r.mean_auc),
            opt(r.pooled_rig),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_init_csv<W: std::io::Write>(out: W, study: &InitStudy) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["start", "batch_id", "rig", "auc", "rig_spread"])?;
    for s in &study.series {
        for r in &s.records {
            w.write_record([
                s.start.to_string(),
                r.batch_id.to_string(),
                opt(r.rig),
                opt(r.auc),
                opt(study.rig_spread(r.batch_id)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Result of [`verify`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerifyReport {
    pub files_checked: usize,
    pub records_checked: usize,
    pub mismatches: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

fn load_snap(out: &Path, rel: &str) -> Result<Snapshot> {
    read_snapshot(std::io::BufReader::new(fs::File::open(out.join(rel))?))
}

/// Recomputes every metric record in `out` from the stored snapshots and
/// the raw data, and checks output hashes against the manifest. Only
/// evaluation runs; nothing is retrained.
pub fn verify(out: &Path) -> Result<VerifyReport> {
    let manifest = RunManifest::read(out)?;
    let cfg = ExperimentConfig::from_toml(&fs::read_to_string(out.join("config.toml"))?)?;
    let mut report = VerifyReport::default();
    for e in &manifest.outputs {
        let bytes = fs::read(out.join(&e.path))?;
        if hex::encode(Sha256::digest(&bytes)) != e.sha256 {
            report.mismatches.push(format!("{}: hash differs from manifest", e.path));
        }
    }
    let data = load_data(&cfg)?;
    let batch = |id: u32| data.batches.iter().find(|b| b.id == id);
    let check = |file: &str, rec: &MetricRecord, model: &LinearModel, report: &mut VerifyReport| {
        report.records_checked += 1;
        match batch(rec.batch_id).map(|b| evaluate(model, b)) {
            Some(Ok(r)) if r == *rec => {}
            Some(Ok(_)) => report.mismatches.push(format!("{file}: batch {} differs", rec.batch_id)),
            Some(Err(e)) => report.mismatches.push(format!("{file}: batch {}: {e}", rec.batch_id)),
            None => report.mismatches.push(format!("{file}: batch {} missing from data", rec.batch_id)),
        }
    };

    let has = |p: &str| manifest.outputs.iter().any(|e| e.path == p);
    for e in manifest.outputs.iter().filter(|e| e.path.starts_with("metrics/")) {
        let label = e.path.trim_start_matches("metrics/").trim_end_matches(".csv");
        let records = read_metrics_csv(fs::File::open(out.join(&e.path))?)?;
        report.files_checked += 1;
        let mut prev: Option<u32> = None;
        for rec in &records {
            let rel = match label {
                "stale" => "snapshots/base.snap".to_string(),
                "moving_window" => window_name(rec.batch_id),
                _ => match prev {
                    None => initial_name(label),
                    Some(p) => snapshot_name(label, p),
                },
            };
            let model = load_snap(out, &rel)?.model;
            check(&e.path, rec, &model, &mut report);
            prev = Some(rec.batch_id);
        }
    }

    if has("init_study.csv") {
        report.files_checked += 1;
        let mut rdr = csv::Reader::from_path(out.join("init_study.csv"))?;
        let mut last: BTreeMap<u32, u32> = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let start: u32 = row[0].parse().map_err(|_| Error::Snapshot("bad init row".into()))?;
            let id: u32 = row[1].parse().map_err(|_| Error::Snapshot("bad init row".into()))?;
            let dir = format!("init_{start}");
            let rel = match last.get(&start) {
                None => initial_name(&dir),
                Some(p) => snapshot_name(&dir, *p),
            };
            last.insert(start, id);
            let model = load_snap(out, &rel)?.model;
            let b = batch(id).ok_or(Error::InvalidDay { day: id })?;
            let r = evaluate(&model, b)?;
            report.records_checked += 1;
            if opt(r.rig) != row[2] || opt(r.auc) != row[3] {
                report.mismatches.push(format!("init_study.csv: start {start} batch {id} differs"));
            }
        }
    }

    if let (true, Some(dc)) = (has("delay.csv"), &cfg.delay) {
        report.files_checked += 1;
        let eval: Vec<Batch> = data.range(dc.eval_start, dc.eval_days).into_iter().cloned().collect();
        let mut rdr = csv::Reader::from_path(out.join("delay.csv"))?;
        for row in rdr.records() {
            let row = row?;
            let rel = if &row[0] == "retrain" {
                Some("snapshots/delay_retrain.snap".to_string())
            } else if &row[3] == "true" {
                let through: u32 = row[2].parse().map_err(|_| Error::Snapshot("bad delay row".into()))?;
                Some(snapshot_name(&dc.strategy, through))
            } else {
                None
            };
            if let Some(rel) = rel {
                let model = load_snap(out, &rel)?.model;
                let recs = run_stale(&eval, &model)?;
                report.records_checked += recs.len();
                if opt(mean_auc(&recs)) != row[6] || opt(pooled_rig(&recs)) != row[7] {
                    report.mismatches.push(format!("delay.csv: row {} differs", &row[0]));
                }
            }
        }
    }
    Ok(report)
}

/// Collates the comparison outputs of a finished run into `out/report/`:
/// wide per-batch gain tables and copies of the study tables.
pub fn report(out: &Path) -> Result<Vec<PathBuf>> {
    let manifest = RunManifest::read(out)?;
    let dir = out.join("report");
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();

    let mut series: Vec<(String, Vec<(u32, Vec<String>)>)> = Vec::new();
    for e in manifest.outputs.iter().filter(|e| e.path.starts_with("metrics/")) {
        let label = e.path.trim_start_matches("metrics/").trim_end_matches(".csv").to_string();
        let mut rdr = csv::Reader::from_path(out.join(&e.path))?;
        let header = rdr.headers()?.clone();
        let rows = rdr
            .records()
            .map(|r| {
                let r = r?;
                let id: u32 = r[0].parse().map_err(|_| Error::Snapshot("bad batch id".into()))?;
                let vals = header.iter().zip(r.iter()).map(|(h, v)| format!("{h}={v}")).collect();
                Ok((id, vals))
            })
            .collect::<Result<Vec<_>>>()?;
        series.push((label, rows));
    }
    for column in ["rig_gain_vs_stale", "rig_gain_vs_window", "auc_gain_vs_stale", "auc_gain_vs_window", "rig", "auc"] {
        let ids: std::collections::BTreeSet<u32> =
            series.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.0)).collect();
        let present: Vec<&(String, Vec<(u32, Vec<String>)>)> = series
            .iter()
            .filter(|(_, rows)| rows.iter().any(|r| r.1.iter().any(|v| v.starts_with(&format!("{column}=")))))
            .collect();
        if present.is_empty() {
            continue;
        }
        let path = dir.join(format!("{column}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["batch_id".to_string()];
        header.extend(present.iter().map(|p| p.0.clone()));
        w.write_record(&header)?;
        for id in ids {
            let mut row = vec![id.to_string()];
            for (_, rows) in &present {
                let cell = rows
                    .iter()
                    .find(|r| r.0 == id)
                    .and_then(|r| r.1.iter().find_map(|v| v.strip_prefix(&format!("{column}="))))
                    .unwrap_or("");
                row.push(cell.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        written.push(path);
    }
    for f in ["summary.csv", "bounds.csv", "delay.csv", "init_study.csv"] {
        if out.join(f).exists() {
            let to = dir.join(f);
            fs::copy(out.join(f), &to)?;
            written.push(to);
        }
    }
    Ok(written)
}
