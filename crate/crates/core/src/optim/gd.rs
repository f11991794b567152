use serde::{Deserialize, Serialize};

use super::{all_finite, Objective, Trajectory};
use crate::error::{Error, Result};

/// Full-batch gradient descent with a fixed rate and a fixed number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub learning_rate: f64,
    pub iterations: usize,
}

impl GdConfig {
    pub fn new(learning_rate: f64, iterations: usize) -> Self {
        Self {
            learning_rate,
            iterations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        // a zero rate is accepted: it freezes the model
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Runs exactly `cfg.iterations` steps of `w ← w − α∇F(w)`.
///
/// There is no convergence early-exit. The returned trajectory also carries
/// `∇F(w_k)` so the caller can inspect the gradient at the endpoint.
pub fn run_gd(objective: &dyn Objective, w0: &[f64], cfg: &GdConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let rates = vec![cfg.learning_rate; w0.len()];
    descend(objective, w0, &rates, cfg.iterations)
}

/// Gradient descent with one fixed rate per coordinate.
pub fn run_gd_diag(
    objective: &dyn Objective,
    w0: &[f64],
    rates: &[f64],
    iterations: usize,
) -> Result<Trajectory> {
    if rates.len() != w0.len() {
        return Err(Error::DimensionMismatch {
            expected: w0.len(),
            found: rates.len(),
        });
    }
    if let Some(a) = rates.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(Error::InvalidConfig(format!("invalid per-coordinate rate {a}")));
    }
    if iterations == 0 {
        return Err(Error::InvalidConfig("iterations must be >= 1".into()));
    }
    descend(objective, w0, rates, iterations)
}

fn descend(
    objective: &dyn Objective,
    w0: &[f64],
    rates: &[f64],
    iterations: usize,
) -> Result<Trajectory> {
    if objective.dim() != w0.len() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: w0.len(),
        });
    }
    let n = w0.len();
    let mut iterates = Vec::with_capacity(iterations + 1);
    let mut gradients = Vec::with_capacity(iterations);
    let mut values = Vec::with_capacity(iterations + 1);

    let mut w = w0.to_vec();
    let mut grad = vec![0.0; n];
    for i in 0..=iterations {
        let f = objective.value_grad(&w, &mut grad);
        if !(f.is_finite() && all_finite(&grad) && all_finite(&w)) {
            return Err(Error::Divergence { iteration: i });
        }
        values.push(f);
        iterates.push(w.clone());
        if i == iterations {
            break;
        }
        for ((x, g), a) in w.iter_mut().zip(&grad).zip(rates) {
            *x -= a * g;
        }
        gradients.push(grad.clone());
    }

    Ok(Trajectory {
        iterates,
        gradients,
        final_gradient: Some(grad),
        values,
    })
}
