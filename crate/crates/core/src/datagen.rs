//! Synthetic drifting click streams.
//!
//! Day `t` draws each example's active features from a softmax over
//! drifting popularity logits, feature values from per-feature Beta
//! distributions whose means drift, and labels from
//! `Bernoulli(σ(w_true(t)·x + b(t)))`. True weights follow a Gaussian random
//! walk. The bias is recalibrated every day so the expected CTR stays at
//! `base_ctr`. Holiday days add a transient excursion to the weights and the
//! popularity logits, scaled by `holiday_shock` times the daily drift; the
//! excursion disappears once the holiday is over.
//!
//! The walks are computed sequentially up front; examples for each day come
//! from their own seed, so days can be generated in any order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigmoid, Batch, Example, LinearModel, SparseVector};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamSpec {
    pub dimension: usize,
    pub days: u32,
    pub examples_per_day: usize,
    /// Active features per example.
    pub sparsity: usize,
    /// Per-day random-walk scale of the true weights.
    pub drift_rate: f64,
    /// Per-day random-walk scale of the popularity logits.
    pub shift_rate: f64,
    pub holiday_days: Vec<u32>,
    pub holiday_shock: f64,
    pub base_ctr: f64,
    /// Standard deviation of the day-0 true weights.
    pub weight_scale: f64,
    /// Standard deviation of the day-0 popularity logits.
    pub popularity_scale: f64,
    pub seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            dimension: 200,
            days: 90,
            examples_per_day: 20_000,
            sparsity: 64,
            drift_rate: 0.02,
            shift_rate: 0.05,
            holiday_days: vec![43, 44, 45, 46],
            holiday_shock: 20.0,
            base_ctr: 0.05,
            weight_scale: 0.25,
            popularity_scale: 1.0,
            seed: 42,
        }
    }
}

impl StreamSpec {
    /// A stream with no drift and no holidays.
    pub fn stationary(mut self) -> Self {
        self.drift_rate = 0.0;
        self.shift_rate = 0.0;
        self.holiday_days.clear();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.dimension == 0 || self.days == 0 || self.examples_per_day == 0 || self.sparsity == 0 {
            return bad("stream counts must be >= 1");
        }
        if self.sparsity > self.dimension {
            return bad("sparsity cannot exceed dimension");
        }
        if self.dimension > u32::MAX as usize {
            return bad("dimension does not fit feature indices");
        }
        let rates = [self.drift_rate, self.shift_rate, self.holiday_shock, self.weight_scale, self.popularity_scale];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("rates and scales must be finite and >= 0");
        }
        if !(self.base_ctr > 0.0 && self.base_ctr < 1.0) {
            return bad("base_ctr must be in (0, 1)");
        }
        Ok(())
    }

    fn is_holiday(&self, day: u32) -> bool {
        self.holiday_days.contains(&day)
    }
}

/// Generating parameters per day. Never visible to learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `weights[t]` are the effective weights of day `t`, holiday excursion
    /// included.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl GroundTruth {
    pub fn oracle(&self, day: u32) -> Option<LinearModel> {
        let w = self.weights.get(day as usize)?;
        Some(LinearModel::new(w.clone(), self.bias[day as usize]))
    }
}

struct DayParams {
    weights: Vec<f64>,
    popularity: Vec<f64>,
    beta_mean: Vec<f64>,
}

struct Walks {
    days: Vec<DayParams>,
    concentration: Vec<f64>,
}

fn normals(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn walks(spec: &StreamSpec) -> Walks {
    let d = spec.dimension;
    let mut init = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "init", 0));
    let mut w = normals(&mut init, d, spec.weight_scale);
    let mut u = normals(&mut init, d, spec.popularity_scale);
    let mut m: Vec<f64> = normals(&mut init, d, 0.5).into_iter().map(|x| x + 0.4).collect();
    let concentration: Vec<f64> = (0..d).map(|_| init.random_range(0.3..1.0)).collect();

    let mut walk = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "walk", 0));
    let mut days = Vec::with_capacity(spec.days as usize);
    let mut excursion: Option<(Vec<f64>, Vec<f64>)> = None;
    for t in 0..spec.days {
        if t > 0 {
            for (x, s) in w.iter_mut().zip(normals(&mut walk, d, spec.drift_rate)) {
                *x += s;
            }
            for (x, s) in u.iter_mut().zip(normals(&mut walk, d, spec.shift_rate)) {
                *x += s;
            }
            for (x, s) in m.iter_mut().zip(normals(&mut walk, d, spec.shift_rate / 2.0)) {
                *x += s;
            }
        }
        let (mut we, mut ue) = (w.clone(), u.clone());
        if spec.is_holiday(t) {
            // One excursion per run of consecutive holiday days.
            let ex = excursion.get_or_insert_with(|| {
                let mut r = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "holiday", t as u64));
                (
                    normals(&mut r, d, spec.holiday_shock * spec.drift_rate),
                    normals(&mut r, d, spec.holiday_shock * spec.shift_rate),
                )
            });
            we.iter_mut().zip(&ex.0).for_each(|(x, e)| *x += e);
            ue.iter_mut().zip(&ex.1).for_each(|(x, e)| *x += e);
        } else {
            excursion = None;
        }
        days.push(DayParams {
            weights: we,
            popularity: ue,
            beta_mean: m.iter().map(|x| sigmoid(*x)).collect(),
        });
    }
    Walks { days, concentration }
}

/// Bias that makes the mean predicted CTR over `margins` equal `target`.
fn calibrate_bias(margins: &[f64], target: f64) -> f64 {
    let mean_ctr = |b: f64| margins.iter().map(|z| sigmoid(z + b)).sum::<f64>() / margins.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_ctr(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn generate_day(spec: &StreamSpec, walks: &Walks, day: u32) -> (Batch, f64) {
    let p = &walks.days[day as usize];
    let d = spec.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "day", day as u64));
    let gumbel = Gumbel::new(0.0, 1.0).expect("valid gumbel");
    let betas: Vec<Beta<f64>> = (0..d)
        .map(|j| {
            let k = walks.concentration[j];
            let m = p.beta_mean[j].clamp(1e-3, 1.0 - 1e-3);
            Beta::new(k * m, k * (1.0 - m)).expect("positive beta parameters")
        })
        .collect();

    let mut keys: Vec<(f64, u32)> = Vec::with_capacity(d);
    let mut features = Vec::with_capacity(spec.examples_per_day);
    let mut margins = Vec::with_capacity(spec.examples_per_day);
    for _ in 0..spec.examples_per_day {
        // Gumbel top-k: a weighted sample without replacement.
        keys.clear();
        keys.extend((0..d).map(|j| (p.popularity[j] + gumbel.sample(&mut rng), j as u32)));
        keys.select_nth_unstable_by(spec.sparsity - 1, |a, b| b.0.total_cmp(&a.0));
        let mut idx: Vec<u32> = keys[..spec.sparsity].iter().map(|k| k.1).collect();
        idx.sort_unstable();
        let vals: Vec<f64> = idx.iter().map(|&j| betas[j as usize].sample(&mut rng)).collect();
        let x = SparseVector::new(idx, vals).expect("sorted distinct indices");
        margins.push(x.dot(&p.weights));
        features.push(x);
    }
    let bias = calibrate_bias(&margins, spec.base_ctr);
    let examples = features
        .into_iter()
        .zip(&margins)
        .map(|(x, z)| {
            let label = rng.random::<f64>() < sigmoid(z + bias);
            Example::new(x, label)
        })
        .collect();
    (Batch::new(day, examples), bias)
}

/// Generates every day of `spec`.
pub fn generate_stream(spec: &StreamSpec) -> Result<(Vec<Batch>, GroundTruth)> {
    generate_stream_parallel(spec, 1)
}

/// Same output as [`generate_stream`], with days spread over `workers`
/// threads.
pub fn generate_stream_parallel(spec: &StreamSpec, workers: usize) -> Result<(Vec<Batch>, GroundTruth)> {
    spec.validate()?;
    let walks = walks(spec);
    let days: Vec<u32> = (0..spec.days).collect();
    let workers = workers.clamp(1, days.len());
    let chunk = days.len().div_ceil(workers);
    let mut out: Vec<(Batch, f64)> = Vec::with_capacity(days.len());
    std::thread::scope(|s| {
        let handles: Vec<_> = days
            .chunks(chunk)
            .map(|c| {
                let walks = &walks;
                s.spawn(move || c.iter().map(|&t| generate_day(spec, walks, t)).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            out.extend(h.join().expect("generator thread panicked"));
        }
    });
    let (batches, bias): (Vec<Batch>, Vec<f64>) = out.into_iter().unzip();
    let truth = GroundTruth {
        weights: walks.days.into_iter().map(|p| p.weights).collect(),
        bias,
    };
    Ok((batches, truth))
}

/// Writes the ground truth as CSV: `day,bias,w0,..,w{d-1}`.
pub fn write_ground_truth<W: Write>(out: W, truth: &GroundTruth) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = truth.weights.first().map_or(0, |x| x.len());
    let mut header = vec!["day".to_string(), "bias".to_string()];
    header.extend((0..d).map(|j| format!("w{j}")));
    w.write_record(&header)?;
    for (t, (ws, b)) in truth.weights.iter().zip(&truth.bias).enumerate() {
        let mut row = vec![t.to_string(), b.to_string()];
        row.extend(ws.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CorruptionMode {
    /// Flip the labels of this fraction of examples.
    LabelFlip { fraction: f64 },
    /// Raise the day's CTR to `σ(logit(ctr) + logit_shift)` by turning
    /// randomly chosen negatives into positives.
    CtrSpike { logit_shift: f64 },
    /// Drop this fraction of examples.
    VolumeDrop { fraction: f64 },
    /// Remove this fraction of the feature coordinates from every example.
    FeatureZeroing { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub day: u32,
    #[serde(flatten)]
    pub mode: CorruptionMode,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        let frac = match self.mode {
            CorruptionMode::LabelFlip { fraction }
            | CorruptionMode::VolumeDrop { fraction }
            | CorruptionMode::FeatureZeroing { fraction } => fraction,
            CorruptionMode::CtrSpike { logit_shift } => {
                if !(logit_shift.is_finite() && logit_shift >= 0.0) {
                    return Err(Error::InvalidConfig("ctr spike logit shift must be >= 0".into()));
                }
                return Ok(());
            }
        };
        if !(0.0..=1.0).contains(&frac) {
            return Err(Error::InvalidConfig(format!("corruption fraction must be in [0, 1], got {frac}")));
        }
        Ok(())
    }
}

/// `count` distinct positions out of `0..n`, in increasing order.
fn choose(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    let mut picked = rand::seq::index::sample(rng, n, count.min(n)).into_vec();
    picked.sort_unstable();
    picked
}

/// Returns a copy of `batches` with the day named in `spec` corrupted.
/// Randomness comes from `seed` and the day, so the result is reproducible.
pub fn inject_corruption(batches: &[Batch], spec: &CorruptionSpec, seed: u64) -> Result<Vec<Batch>> {
    spec.validate()?;
    let pos = batches
        .iter()
        .position(|b| b.id == spec.day)
        .ok_or(Error::InvalidDay { day: spec.day })?;
    let mut out = batches.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "corruption", spec.day as u64));
    let batch = &mut out[pos];
    let n = batch.len();
    match spec.mode {
        CorruptionMode::LabelFlip { fraction } => {
            for i in choose(&mut rng, n, (fraction * n as f64).round() as usize) {
                let e = &mut batch.examples[i];
                e.label = !e.label;
            }
        }
        CorruptionMode::CtrSpike { logit_shift } => {
            let clicks = batch.clicks();
            let ctr = (clicks as f64 / n.max(1) as f64).clamp(1e-6, 1.0 - 1e-6);
            let target = sigmoid((ctr / (1.0 - ctr)).ln() + logit_shift);
            let extra = ((target * n as f64).round() as usize).saturating_sub(clicks);
            let negatives: Vec<usize> = (0..n).filter(|&i| !batch.examples[i].label).collect();
            for j in choose(&mut rng, negatives.len(), extra) {
                batch.examples[negatives[j]].label = true;
            }
        }
        CorruptionMode::VolumeDrop { fraction } => {
            let keep = n - (fraction * n as f64).round() as usize;
            let kept = choose(&mut rng, n, keep);
            let examples = std::mem::take(&mut batch.examples);
            let mut it = kept.into_iter().peekable();
            batch.examples = examples
                .into_iter()
                .enumerate()
                .filter_map(|(i, e)| {
                    if it.peek() == Some(&i) {
                        it.next();
                        Some(e)
                    } else {
                        None
                    }
                })
                .collect();
        }
        CorruptionMode::FeatureZeroing { fraction } => {
            let d = batch.examples.iter().map(|e| e.features.min_dimension()).max().unwrap_or(0);
            let dropped = choose(&mut rng, d, (fraction * d as f64).round() as usize);
            for e in &mut batch.examples {
                e.features.retain_indices(|j| dropped.binary_search(&j).is_err());
            }
        }
    }
    Ok(out)
}
