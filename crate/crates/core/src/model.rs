//! Sparse-feature logistic regression: data types, loss, gradient and the
//! proximal objectives used by the incremental updates.
//!
//! Parameters are handled in two shapes. [`LinearModel`] is the user-facing
//! value (weights plus bias). Optimizers work on a flat parameter vector of
//! length `d + 1` with the bias stored last, as if every example carried an
//! implicit feature of value 1.0 at index `d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Objective, SampledObjective};

/// Predicted probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before
/// taking logs.
pub const P_CLAMP: f64 = 1e-15;

const SUM_CHUNK: usize = 256;

/// Sorted sparse feature vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::InvalidSparseVector(format!(
                "{} indices but {} values",
                indices.len(),
                values.len()
            )));
        }
        for pair in indices.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidSparseVector(format!(
                    "indices not strictly increasing at {} -> {}",
                    pair[0], pair[1]
                )));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSparseVector(format!("non-finite value {v}")));
        }
        Ok(Self { indices, values })
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, f64)>,
    {
        let (indices, values) = pairs.into_iter().unzip();
        Self::new(indices, values)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| (i as usize, v))
    }

    /// One past the largest index, or 0 for an empty vector.
    pub fn min_dimension(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    /// Dot product against a dense slice. Indices must be in range.
    #[inline]
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| dense[i as usize] * v)
            .sum()
    }

    /// Keeps only the entries for which `keep(index)` is true.
    pub fn retain_indices(&mut self, mut keep: impl FnMut(usize) -> bool) {
        let mut w = 0;
        for r in 0..self.indices.len() {
            if keep(self.indices[r] as usize) {
                self.indices[w] = self.indices[r];
                self.values[w] = self.values[r];
                w += 1;
            }
        }
        self.indices.truncate(w);
        self.values.truncate(w);
    }
}

/// A labeled impression. `label` is true for a click.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: SparseVector,
    pub label: bool,
}

impl Example {
    pub fn new(features: SparseVector, label: bool) -> Self {
        Self { features, label }
    }

    #[inline]
    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

/// One day (or other period) of examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub id: u32,
    pub examples: Vec<Example>,
}

impl Batch {
    pub fn new(id: u32, examples: Vec<Example>) -> Self {
        Self { id, examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn clicks(&self) -> usize {
        self.examples.iter().filter(|e| e.label).count()
    }

    pub fn ctr(&self) -> f64 {
        if self.examples.is_empty() {
            0.0
        } else {
            self.clicks() as f64 / self.examples.len() as f64
        }
    }

    /// Checks every feature index against `dimension`.
    pub fn check_dimension(&self, dimension: usize) -> Result<()> {
        for e in &self.examples {
            let needed = e.features.min_dimension();
            if needed > dimension {
                return Err(Error::IndexOutOfRange {
                    index: needed - 1,
                    dimension,
                });
            }
        }
        Ok(())
    }
}

/// Dense logistic-regression weights plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            weights: vec![0.0; dimension],
            bias: 0.0,
        }
    }

    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self { weights, bias }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    /// Flat parameter vector, bias last.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.weights.len() + 1);
        p.extend_from_slice(&self.weights);
        p.push(self.bias);
        p
    }

    pub fn from_params(params: &[f64]) -> Self {
        assert!(!params.is_empty(), "parameter vector must hold the bias");
        let (bias, weights) = params.split_last().unwrap();
        Self {
            weights: weights.to_vec(),
            bias: *bias,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    #[inline]
    pub fn margin(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    /// Click probability, validating indices.
    pub fn predict(&self, x: &SparseVector) -> Result<f64> {
        predict(self, x)
    }

    /// Probabilities for every example in a batch.
    pub fn predict_batch(&self, batch: &Batch) -> Result<Vec<f64>> {
        batch.check_dimension(self.dimension())?;
        Ok(batch
            .examples
            .iter()
            .map(|e| sigmoid(self.margin(&e.features)))
            .collect())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn clamp_probability(p: f64) -> f64 {
    p.clamp(P_CLAMP, 1.0 - P_CLAMP)
}

/// Log loss of a single prediction, with clamping.
#[inline]
pub fn example_loss(margin: f64, label: bool) -> f64 {
    // σ(-z) = 1 - σ(z) without cancellation
    let q = if label { sigmoid(margin) } else { sigmoid(-margin) };
    -clamp_probability(q).ln()
}

/// Log loss of a constant probability `p` on one label.
#[inline]
pub fn constant_loss(p: f64, label: bool) -> f64 {
    let p = clamp_probability(p);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn predict(model: &LinearModel, x: &SparseVector) -> Result<f64> {
    let needed = x.min_dimension();
    if needed > model.dimension() {
        return Err(Error::IndexOutOfRange {
            index: needed - 1,
            dimension: model.dimension(),
        });
    }
    Ok(sigmoid(model.margin(x)))
}

/// Sums a sequence with fixed-size chunks combined pairwise, so the result
/// depends only on the order of the input.
pub(crate) fn chunked_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut partials = Vec::new();
    let mut acc = 0.0;
    let mut n = 0;
    for t in terms {
        acc += t;
        n += 1;
        if n == SUM_CHUNK {
            partials.push(acc);
            acc = 0.0;
            n = 0;
        }
    }
    if n > 0 || partials.is_empty() {
        partials.push(acc);
    }
    pairwise(&partials)
}

fn pairwise(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise(&xs[..n / 2]) + pairwise(&xs[n / 2..]),
    }
}

#[inline]
fn margin_params(params: &[f64], x: &SparseVector) -> f64 {
    x.dot(params) + params[params.len() - 1]
}

/// F(w) and its gradient over a slice of examples, parameters in flat form.
/// `grad` is overwritten.
pub(crate) fn loss_grad_params<'a, I>(params: &[f64], examples: I, grad: &mut [f64]) -> f64
where
    I: Iterator<Item = &'a Example>,
{
    grad.iter_mut().for_each(|g| *g = 0.0);
    let bias_slot = params.len() - 1;
    let terms = examples.map(|e| {
        let z = margin_params(params, &e.features);
        let residual = sigmoid(z) - e.target();
        for (r, v) in e.features.iter() {
            grad[r] += residual * v;
        }
        grad[bias_slot] += residual;
        example_loss(z, e.label)
    });
    chunked_sum(terms)
}

pub(crate) fn loss_params<'a, I>(params: &[f64], examples: I) -> f64
where
    I: Iterator<Item = &'a Example>,
{
    chunked_sum(examples.map(|e| example_loss(margin_params(params, &e.features), e.label)))
}

fn check_model_batch(model: &LinearModel, batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    batch.check_dimension(model.dimension())
}

/// Unregularized log loss summed over the batch.
pub fn logistic_loss(model: &LinearModel, batch: &Batch) -> Result<f64> {
    check_model_batch(model, batch)?;
    Ok(loss_params(&model.params(), batch.examples.iter()))
}

/// Gradient of [`logistic_loss`], length `d + 1` with the bias last.
pub fn gradient(model: &LinearModel, batch: &Batch) -> Result<Vec<f64>> {
    check_model_batch(model, batch)?;
    let params = model.params();
    let mut grad = vec![0.0; params.len()];
    loss_grad_params(&params, batch.examples.iter(), &mut grad);
    Ok(grad)
}

/// Strength of the proximal penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProxPenalty {
    /// `(λ/2) ||w - w_prev||²`
    Uniform(f64),
    /// `Σ_r λ_r (w_r - w_prev_r)²`, one entry per parameter including the
    /// bias. Note: no factor 1/2.
    PerCoordinate(Vec<f64>),
}

impl ProxPenalty {
    /// Per-coordinate strengths that reproduce `Uniform(lambda)` exactly:
    /// `λ_r = λ/2`, or zero on the bias when it is not regularized.
    pub fn uniform_as_per_coordinate(lambda: f64, dimension: usize, regularize_bias: bool) -> Self {
        let mut v = vec![lambda / 2.0; dimension + 1];
        if !regularize_bias {
            v[dimension] = 0.0;
        }
        ProxPenalty::PerCoordinate(v)
    }
}

/// Proximal term anchored at the previous round's model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxConfig {
    pub anchor: LinearModel,
    pub penalty: ProxPenalty,
    /// Only consulted for [`ProxPenalty::Uniform`]; per-coordinate vectors
    /// carry their own bias entry.
    pub regularize_bias: bool,
}

impl ProxConfig {
    pub fn uniform(anchor: LinearModel, lambda: f64) -> Result<Self> {
        let cfg = Self {
            anchor,
            penalty: ProxPenalty::Uniform(lambda),
            regularize_bias: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn per_coordinate(anchor: LinearModel, lambdas: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            anchor,
            penalty: ProxPenalty::PerCoordinate(lambdas),
            regularize_bias: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.anchor.is_finite() {
            return Err(Error::InvalidConfig("prox anchor has non-finite weights".into()));
        }
        match &self.penalty {
            ProxPenalty::Uniform(l) => {
                if !(l.is_finite() && *l > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "uniform lambda must be finite and > 0, got {l}"
                    )));
                }
            }
            ProxPenalty::PerCoordinate(v) => {
                let expected = self.anchor.dimension() + 1;
                if v.len() != expected {
                    return Err(Error::DimensionMismatch {
                        expected,
                        found: v.len(),
                    });
                }
                if let Some(l) = v.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
                    return Err(Error::InvalidConfig(format!(
                        "per-coordinate lambda must be finite and >= 0, got {l}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.anchor.dimension()
    }

    /// Penalty value at `params` (flat form).
    pub fn penalty_value(&self, params: &[f64]) -> f64 {
        let d = self.dimension();
        let anchor = self.anchor.weights.iter().chain(std::iter::once(&self.anchor.bias));
        match &self.penalty {
            ProxPenalty::Uniform(l) => {
                let sq: f64 = params
                    .iter()
                    .zip(anchor)
                    .enumerate()
                    .filter(|(r, _)| *r < d || self.regularize_bias)
                    .map(|(_, (w, a))| (w - a) * (w - a))
                    .sum();
                0.5 * l * sq
            }
            ProxPenalty::PerCoordinate(ls) => params
                .iter()
                .zip(anchor)
                .zip(ls)
                .map(|((w, a), l)| l * (w - a) * (w - a))
                .sum(),
        }
    }

    /// Adds the penalty gradient at `params` into `grad`.
    pub fn add_penalty_gradient(&self, params: &[f64], grad: &mut [f64]) {
        let d = self.dimension();
        let anchor = self.anchor.weights.iter().chain(std::iter::once(&self.anchor.bias));
        match &self.penalty {
            ProxPenalty::Uniform(l) => {
                for (r, ((g, w), a)) in grad.iter_mut().zip(params).zip(anchor).enumerate() {
                    if r < d || self.regularize_bias {
                        *g += l * (w - a);
                    }
                }
            }
            ProxPenalty::PerCoordinate(ls) => {
                for (((g, w), a), l) in grad.iter_mut().zip(params).zip(anchor).zip(ls) {
                    *g += 2.0 * l * (w - a);
                }
            }
        }
    }
}

fn check_prox(model: &LinearModel, cfg: &ProxConfig) -> Result<()> {
    if cfg.dimension() != model.dimension() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dimension(),
            found: model.dimension(),
        });
    }
    cfg.validate()
}

/// Batch loss plus the proximal penalty.
pub fn prox_objective(model: &LinearModel, batch: &Batch, cfg: &ProxConfig) -> Result<f64> {
    check_prox(model, cfg)?;
    let f = logistic_loss(model, batch)?;
    Ok(f + cfg.penalty_value(&model.params()))
}

pub fn prox_gradient(model: &LinearModel, batch: &Batch, cfg: &ProxConfig) -> Result<Vec<f64>> {
    check_prox(model, cfg)?;
    let mut grad = gradient(model, batch)?;
    cfg.add_penalty_gradient(&model.params(), &mut grad);
    Ok(grad)
}

/// Summed log loss over one or more example slices, optionally with a ridge
/// term `(ridge/2)||w||²` on every parameter including the bias.
#[derive(Debug, Clone)]
pub struct LogisticObjective<'a> {
    parts: Vec<&'a [Example]>,
    offsets: Vec<usize>,
    dimension: usize,
    ridge: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(batch: &'a Batch, dimension: usize) -> Result<Self> {
        Self::from_parts(vec![&batch.examples[..]], dimension, 0.0)
    }

    /// Concatenation of several batches.
    pub fn over_batches<I>(batches: I, dimension: usize, ridge: f64) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Batch>,
    {
        let parts = batches.into_iter().map(|b| &b.examples[..]).collect();
        Self::from_parts(parts, dimension, ridge)
    }

    pub fn from_parts(parts: Vec<&'a [Example]>, dimension: usize, ridge: f64) -> Result<Self> {
        if !(ridge.is_finite() && ridge >= 0.0) {
            return Err(Error::InvalidConfig(format!("ridge must be >= 0, got {ridge}")));
        }
        let mut offsets = Vec::with_capacity(parts.len() + 1);
        let mut total = 0;
        offsets.push(0);
        for part in &parts {
            for e in part.iter() {
                let needed = e.features.min_dimension();
                if needed > dimension {
                    return Err(Error::IndexOutOfRange {
                        index: needed - 1,
                        dimension,
                    });
                }
            }
            total += part.len();
            offsets.push(total);
        }
        if total == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(Self {
            parts,
            offsets,
            dimension,
            ridge,
        })
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn examples(&self) -> impl Iterator<Item = &'a Example> + '_ {
        self.parts.iter().flat_map(|p| p.iter())
    }

    pub(crate) fn example(&self, i: usize) -> &'a Example {
        let part = self.offsets.partition_point(|&o| o <= i) - 1;
        &self.parts[part][i - self.offsets[part]]
    }

    fn add_ridge(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        if self.ridge == 0.0 {
            return 0.0;
        }
        for (g, x) in grad.iter_mut().zip(w) {
            *g += self.ridge * x;
        }
        0.5 * self.ridge * w.iter().map(|x| x * x).sum::<f64>()
    }

    /// Fisher-information diagonal `Σ_j p_j(1-p_j) x_jr²` at `w` (flat form).
    pub fn fisher_diagonal(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension + 1];
        for e in self.examples() {
            let p = sigmoid(margin_params(w, &e.features));
            let c = p * (1.0 - p);
            for (r, v) in e.features.iter() {
                out[r] += c * v * v;
            }
            out[self.dimension] += c;
        }
        out
    }
}

impl Objective for LogisticObjective<'_> {
    fn dim(&self) -> usize {
        self.dimension + 1
    }

    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let f = loss_grad_params(w, self.examples(), grad);
        f + self.add_ridge(w, grad)
    }

    fn value(&self, w: &[f64]) -> f64 {
        let f = loss_params(w, self.examples());
        if self.ridge == 0.0 {
            f
        } else {
            f + 0.5 * self.ridge * w.iter().map(|x| x * x).sum::<f64>()
        }
    }
}

impl SampledObjective for LogisticObjective<'_> {
    fn num_samples(&self) -> usize {
        self.len()
    }

    fn value_grad_samples(&self, w: &[f64], samples: &[usize], grad: &mut [f64]) -> f64 {
        // the ridge term is spread evenly over samples so a full pass of
        // minibatches sees it exactly once
        let f = loss_grad_params(w, samples.iter().map(|&i| self.example(i)), grad);
        if self.ridge == 0.0 {
            return f;
        }
        let share = samples.len() as f64 / self.len() as f64;
        for (g, x) in grad.iter_mut().zip(w) {
            *g += share * self.ridge * x;
        }
        f + share * 0.5 * self.ridge * w.iter().map(|x| x * x).sum::<f64>()
    }

    fn sample_support(&self, sample: usize, out: &mut Vec<usize>) {
        let e = self.example(sample);
        out.extend(e.features.iter().map(|(r, _)| r));
        out.push(self.dimension);
    }
}

/// `inner(w) + penalty(w)` for any inner objective in flat form.
pub struct ProxObjective<'a> {
    inner: &'a dyn Objective,
    cfg: &'a ProxConfig,
}

impl<'a> ProxObjective<'a> {
    pub fn new(inner: &'a dyn Objective, cfg: &'a ProxConfig) -> Result<Self> {
        cfg.validate()?;
        if inner.dim() != cfg.dimension() + 1 {
            return Err(Error::DimensionMismatch {
                expected: cfg.dimension() + 1,
                found: inner.dim(),
            });
        }
        Ok(Self { inner, cfg })
    }
}

impl Objective for ProxObjective<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.inner.value_grad(w, grad);
        self.cfg.add_penalty_gradient(w, grad);
        f + self.cfg.penalty_value(w)
    }

    fn value(&self, w: &[f64]) -> f64 {
        self.inner.value(w) + self.cfg.penalty_value(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(pairs: &[(u32, f64)]) -> SparseVector {
        SparseVector::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn sparse_vector_rejects_bad_input() {
        assert!(SparseVector::new(vec![3, 3], vec![1.0, 1.0]).is_err());
        assert!(SparseVector::new(vec![4, 2], vec![1.0, 1.0]).is_err());
        assert!(SparseVector::new(vec![1], vec![f64::NAN]).is_err());
        assert!(SparseVector::new(vec![1], vec![]).is_err());
    }

    #[test]
    fn predict_values() {
        let m = LinearModel::zeros(3);
        assert_eq!(predict(&m, &sv(&[(0, 4.0), (2, -1.0)])).unwrap(), 0.5);

        let m = LinearModel::new(vec![0.0], 3f64.ln());
        assert!((predict(&m, &SparseVector::empty()).unwrap() - 0.75).abs() < 1e-15);

        let m = LinearModel::new(vec![0.2, -0.1], 0.05);
        let p = predict(&m, &sv(&[(0, 1.0), (1, 2.0)])).unwrap();
        // 0.2 - 0.2 + 0.05
        let expected = 1.0 / (1.0 + (-0.05f64).exp());
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.512497).abs() < 1e-6);
    }

    #[test]
    fn predict_rejects_out_of_range_index() {
        let m = LinearModel::zeros(2);
        assert!(matches!(
            predict(&m, &sv(&[(2, 1.0)])),
            Err(Error::IndexOutOfRange { index: 2, dimension: 2 })
        ));
    }

    #[test]
    fn loss_values() {
        let batch = Batch::new(
            0,
            (0..4)
                .map(|i| Example::new(sv(&[(0, i as f64)]), i % 2 == 0))
                .collect(),
        );
        let f = logistic_loss(&LinearModel::zeros(1), &batch).unwrap();
        assert!((f - 4.0 * 2f64.ln()).abs() < 1e-12);

        let one = Batch::new(0, vec![Example::new(SparseVector::empty(), true)]);
        let f = logistic_loss(&LinearModel::new(vec![0.0], 3f64.ln()), &one).unwrap();
        assert!((f - (-(0.75f64).ln())).abs() < 1e-12);
        assert!((f - 0.287682).abs() < 1e-6);
    }

    #[test]
    fn saturated_predictions_are_clamped() {
        let batch = Batch::new(
            0,
            vec![
                Example::new(sv(&[(0, 1.0)]), true),
                Example::new(sv(&[(0, -1.0)]), false),
            ],
        );
        let perfect = LinearModel::new(vec![1e6], 0.0);
        let f = logistic_loss(&perfect, &batch).unwrap();
        assert!(f >= 0.0 && f < 1e-13);
        let g = gradient(&perfect, &batch).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));

        let wrong = LinearModel::new(vec![-1e6], 0.0);
        let f = logistic_loss(&wrong, &batch).unwrap();
        assert!((f - 2.0 * -(P_CLAMP.ln())).abs() < 1e-9);
    }

    #[test]
    fn empty_batch_errors() {
        let b = Batch::new(0, vec![]);
        assert!(matches!(logistic_loss(&LinearModel::zeros(1), &b), Err(Error::EmptyBatch)));
        assert!(matches!(gradient(&LinearModel::zeros(1), &b), Err(Error::EmptyBatch)));
    }

    #[test]
    fn gradient_single_example() {
        let b = Batch::new(0, vec![Example::new(sv(&[(0, 1.0)]), true)]);
        let g = gradient(&LinearModel::zeros(2), &b).unwrap();
        assert_eq!(g, vec![-0.5, 0.0, -0.5]);
    }

    #[test]
    fn prox_vanishes_at_anchor() {
        let b = Batch::new(0, vec![Example::new(sv(&[(1, 0.5)]), false)]);
        let m = LinearModel::new(vec![0.3, -0.2], 0.1);
        let cfg = ProxConfig::uniform(m.clone(), 7.0).unwrap();
        assert_eq!(prox_objective(&m, &b, &cfg).unwrap(), logistic_loss(&m, &b).unwrap());
        assert_eq!(prox_gradient(&m, &b, &cfg).unwrap(), gradient(&m, &b).unwrap());

        let zero = ProxConfig::per_coordinate(LinearModel::zeros(2), vec![0.0; 3]).unwrap();
        assert_eq!(prox_objective(&m, &b, &zero).unwrap(), logistic_loss(&m, &b).unwrap());
    }

    #[test]
    fn penalty_gradient_alone() {
        let cfg = ProxConfig::uniform(LinearModel::new(vec![1.0, 2.0], 0.5), 3.0).unwrap();
        let w = [2.0, 0.0, 1.0];
        let mut g = vec![0.0; 3];
        cfg.add_penalty_gradient(&w, &mut g);
        assert_eq!(g, vec![3.0, -6.0, 1.5]);
        assert_eq!(cfg.penalty_value(&w), 1.5 * (1.0 + 4.0 + 0.25));
    }

    #[test]
    fn uniform_and_converted_penalties_agree() {
        let anchor = LinearModel::new(vec![0.4, -1.0, 2.0], 0.3);
        let u = ProxConfig::uniform(anchor.clone(), 5.0).unwrap();
        let p = ProxConfig {
            anchor,
            penalty: ProxPenalty::uniform_as_per_coordinate(5.0, 3, true),
            regularize_bias: true,
        };
        let w = [1.0, 2.0, -3.0, 0.7];
        assert!((u.penalty_value(&w) - p.penalty_value(&w)).abs() < 1e-12);
        let (mut gu, mut gp) = (vec![0.0; 4], vec![0.0; 4]);
        u.add_penalty_gradient(&w, &mut gu);
        p.add_penalty_gradient(&w, &mut gp);
        for (a, b) in gu.iter().zip(&gp) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_can_be_left_unregularized() {
        let mut cfg = ProxConfig::uniform(LinearModel::zeros(1), 2.0).unwrap();
        cfg.regularize_bias = false;
        assert_eq!(cfg.penalty_value(&[1.0, 10.0]), 1.0);
    }

    #[test]
    fn prox_rejects_mismatched_dimension_and_bad_lambda() {
        let b = Batch::new(0, vec![Example::new(SparseVector::empty(), true)]);
        let cfg = ProxConfig::uniform(LinearModel::zeros(2), 1.0).unwrap();
        assert!(matches!(
            prox_objective(&LinearModel::zeros(3), &b, &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ProxConfig::uniform(LinearModel::zeros(2), 0.0).is_err());
        assert!(ProxConfig::per_coordinate(LinearModel::zeros(2), vec![1.0, -1.0, 0.0]).is_err());
        assert!(ProxConfig::per_coordinate(LinearModel::zeros(2), vec![1.0; 2]).is_err());
    }

    #[test]
    fn chunked_sum_matches_naive_for_small_inputs() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((chunked_sum(xs.iter().copied()) - naive).abs() < 1e-10);
        assert_eq!(chunked_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn objective_over_parts_matches_concatenation() {
        let a = Batch::new(0, vec![Example::new(sv(&[(0, 1.0)]), true)]);
        let b = Batch::new(
            1,
            vec![
                Example::new(sv(&[(1, 2.0)]), false),
                Example::new(sv(&[(0, 0.5), (1, 0.5)]), true),
            ],
        );
        let joined = Batch::new(0, a.examples.iter().chain(&b.examples).cloned().collect());
        let split = LogisticObjective::over_batches([&a, &b], 2, 0.0).unwrap();
        let whole = LogisticObjective::new(&joined, 2).unwrap();
        let w = [0.3, -0.4, 0.1];
        let (mut g1, mut g2) = (vec![0.0; 3], vec![0.0; 3]);
        assert_eq!(split.value_grad(&w, &mut g1), whole.value_grad(&w, &mut g2));
        assert_eq!(g1, g2);
        assert_eq!(split.example(2), &joined.examples[2]);
    }
}
