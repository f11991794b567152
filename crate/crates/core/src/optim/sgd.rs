use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{all_finite, SampledObjective, Trajectory};
use crate::error::{Error, Result};

/// Minibatch SGD with a fixed rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub rng_seed: u64,
    pub shuffle: bool,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            epochs: 10,
            minibatch_size: 1000,
            rng_seed: 0,
            shuffle: true,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and minibatch size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_dims(objective: &dyn SampledObjective, w0: &[f64]) -> Result<()> {
    if objective.dim() != w0.len() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: w0.len(),
        });
    }
    if objective.num_samples() == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

/// `epochs` full passes over the samples in minibatches. The last short
/// minibatch of a pass is processed, not dropped. The trajectory records
/// end-of-pass iterates.
pub fn run_sgd(objective: &dyn SampledObjective, w0: &[f64], cfg: &SgdConfig) -> Result<Trajectory> {
    cfg.validate()?;
    check_dims(objective, w0)?;
    let n = w0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..objective.num_samples()).collect();

    let mut w = w0.to_vec();
    let mut grad = vec![0.0; n];
    let mut iterates = vec![w.clone()];
    let mut gradients = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut pass = vec![0.0; n];
        for chunk in order.chunks(cfg.minibatch_size) {
            let f = objective.value_grad_samples(&w, chunk, &mut grad);
            if !(f.is_finite() && all_finite(&grad)) {
                return Err(Error::Divergence { iteration: epoch });
            }
            for ((x, g), p) in w.iter_mut().zip(&grad).zip(pass.iter_mut()) {
                *x -= cfg.learning_rate * g;
                *p += g;
            }
        }
        if !all_finite(&w) {
            return Err(Error::Divergence { iteration: epoch + 1 });
        }
        iterates.push(w.clone());
        gradients.push(pass);
    }
    Ok(Trajectory {
        iterates,
        gradients,
        final_gradient: None,
        values: Vec::new(),
    })
}

/// How often each parameter has been seen, for `1/n` per-coordinate rates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerCoordState {
    pub counts: Vec<u64>,
}

impl PerCoordState {
    pub fn new(num_params: usize) -> Self {
        Self {
            counts: vec![0; num_params],
        }
    }

    /// Step size of a coordinate before it is seen again. Unseen coordinates
    /// get rate 1.
    pub fn rate(&self, coordinate: usize) -> f64 {
        1.0 / self.counts[coordinate].max(1) as f64
    }

    /// Adds one occurrence per sample to every coordinate it touches.
    pub fn observe(&mut self, objective: &dyn SampledObjective) {
        let mut support = Vec::new();
        for i in 0..objective.num_samples() {
            support.clear();
            objective.sample_support(i, &mut support);
            for &r in &support {
                self.counts[r] += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerCoordConfig {
    pub epochs: usize,
    pub shuffle: bool,
    pub rng_seed: u64,
}

impl Default for PerCoordConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            shuffle: false,
            rng_seed: 0,
        }
    }
}

/// Per-example SGD where a step on coordinate `r` uses rate `1/n_r`, `n_r`
/// being the number of earlier examples (across all rounds) that touched
/// `r`. Counts are updated as each example is processed.
pub fn run_sgd_percoord(
    objective: &dyn SampledObjective,
    w0: &[f64],
    state: &PerCoordState,
    cfg: &PerCoordConfig,
) -> Result<(Trajectory, PerCoordState)> {
    check_dims(objective, w0)?;
    if state.counts.len() != w0.len() {
        return Err(Error::DimensionMismatch {
            expected: w0.len(),
            found: state.counts.len(),
        });
    }
    if cfg.epochs == 0 {
        return Err(Error::InvalidConfig("epochs must be >= 1".into()));
    }
    let n = w0.len();
    let mut state = state.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..objective.num_samples()).collect();
    let mut w = w0.to_vec();
    let mut grad = vec![0.0; n];
    let mut support = Vec::new();
    let mut iterates = vec![w.clone()];
    let mut gradients = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut pass = vec![0.0; n];
        for &i in &order {
            let f = objective.value_grad_samples(&w, &[i], &mut grad);
            if !f.is_finite() {
                return Err(Error::Divergence { iteration: epoch });
            }
            support.clear();
            objective.sample_support(i, &mut support);
            for &r in &support {
                let g = grad[r];
                if !g.is_finite() {
                    return Err(Error::Divergence { iteration: epoch });
                }
                w[r] -= state.rate(r) * g;
                pass[r] += g;
                state.counts[r] += 1;
            }
        }
        iterates.push(w.clone());
        gradients.push(pass);
    }
    Ok((
        Trajectory {
            iterates,
            gradients,
            final_gradient: None,
            values: Vec::new(),
        },
        state,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Batch, Example, LogisticObjective, SparseVector};
    use crate::optim::{run_gd, GdConfig};

    fn toy_batch() -> Batch {
        let ex = |pairs: &[(u32, f64)], y| Example::new(SparseVector::from_pairs(pairs.iter().copied()).unwrap(), y);
        Batch::new(
            0,
            vec![
                ex(&[(0, 1.0), (2, 0.5)], true),
                ex(&[(1, 0.25)], false),
                ex(&[(0, 0.3), (1, 0.9)], false),
                ex(&[(2, 1.0)], true),
                ex(&[(0, 0.7)], false),
            ],
        )
    }

    #[test]
    fn full_minibatch_equals_gd() {
        let b = toy_batch();
        let obj = LogisticObjective::new(&b, 3).unwrap();
        let w0 = vec![0.1, -0.2, 0.3, 0.0];
        let cfg = SgdConfig {
            learning_rate: 0.3,
            epochs: 4,
            minibatch_size: b.len(),
            rng_seed: 9,
            shuffle: false,
        };
        let sgd = run_sgd(&obj, &w0, &cfg).unwrap();
        let gd = run_gd(&obj, &w0, &GdConfig::new(0.3, 4)).unwrap();
        assert_eq!(sgd.iterates, gd.iterates);
        assert_eq!(sgd.gradients, gd.gradients);
    }

    #[test]
    fn deterministic_for_seed() {
        let b = toy_batch();
        let obj = LogisticObjective::new(&b, 3).unwrap();
        let cfg = SgdConfig {
            learning_rate: 0.2,
            epochs: 3,
            minibatch_size: 2,
            rng_seed: 17,
            shuffle: true,
        };
        let a = run_sgd(&obj, &[0.0; 4], &cfg).unwrap();
        let b2 = run_sgd(&obj, &[0.0; 4], &cfg).unwrap();
        assert_eq!(a, b2);
        let other = run_sgd(&obj, &[0.0; 4], &SgdConfig { rng_seed: 18, ..cfg }).unwrap();
        assert_ne!(a.last(), other.last());
    }

    #[test]
    fn remainder_minibatch_is_processed() {
        // 5 samples, minibatch 2 -> 3 steps; equals the explicit updates
        let b = toy_batch();
        let obj = LogisticObjective::new(&b, 3).unwrap();
        let cfg = SgdConfig {
            learning_rate: 0.5,
            epochs: 1,
            minibatch_size: 2,
            rng_seed: 0,
            shuffle: false,
        };
        let t = run_sgd(&obj, &[0.0; 4], &cfg).unwrap();
        let mut w = vec![0.0; 4];
        let mut g = vec![0.0; 4];
        for chunk in [[0usize, 1].as_slice(), &[2, 3], &[4]] {
            obj.value_grad_samples(&w, chunk, &mut g);
            for (x, gi) in w.iter_mut().zip(&g) {
                *x -= 0.5 * gi;
            }
        }
        assert_eq!(t.last(), w.as_slice());
    }

    #[test]
    fn percoord_rates_and_counts() {
        let mut s = PerCoordState::new(4);
        s.counts[1] = 4;
        assert_eq!(s.rate(1), 0.25);
        assert_eq!(s.rate(0), 1.0);

        let b = toy_batch();
        let obj = LogisticObjective::new(&b, 3).unwrap();
        let (_, after1) = run_sgd_percoord(&obj, &[0.0; 4], &PerCoordState::new(4), &PerCoordConfig::default()).unwrap();
        // feature occurrences: f0 x3, f1 x2, f2 x2, bias x5
        assert_eq!(after1.counts, vec![3, 2, 2, 5]);
        let (_, after2) = run_sgd_percoord(&obj, &[0.0; 4], &after1, &PerCoordConfig::default()).unwrap();
        assert_eq!(after2.counts, after1.counts.iter().map(|c| 2 * c).collect::<Vec<_>>());

        let mut observed = PerCoordState::new(4);
        observed.observe(&obj);
        assert_eq!(observed, after1);
    }

    #[test]
    fn percoord_first_step_uses_unit_rate() {
        let b = Batch::new(0, vec![Example::new(SparseVector::from_pairs([(0, 1.0)]).unwrap(), true)]);
        let obj = LogisticObjective::new(&b, 1).unwrap();
        let (t, _) = run_sgd_percoord(&obj, &[0.0, 0.0], &PerCoordState::new(2), &PerCoordConfig::default()).unwrap();
        // gradient (p - y) x = -0.5 on both coordinates, rate 1
        assert_eq!(t.last(), &[0.5, 0.5]);
    }
}
