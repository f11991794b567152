//! Iteration engines shared by the early-stopping and proximal updates.
//!
//! All engines work on flat parameter vectors and are bit-reproducible for a
//! given starting point, configuration and seed.

mod gd;
mod lbfgs;
mod sgd;

pub use gd::{run_gd, run_gd_diag, GdConfig};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult};
pub use sgd::{run_sgd, run_sgd_percoord, PerCoordConfig, PerCoordState, SgdConfig};

use serde::{Deserialize, Serialize};

/// A differentiable function of a flat parameter vector.
pub trait Objective {
    fn dim(&self) -> usize;

    /// Returns the value at `w` and overwrites `grad` with the gradient.
    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, w: &[f64]) -> f64 {
        let mut scratch = vec![0.0; self.dim()];
        self.value_grad(w, &mut scratch)
    }
}

/// An objective that is a sum over samples, for minibatch engines.
pub trait SampledObjective: Objective {
    fn num_samples(&self) -> usize;

    /// Value and gradient of the partial sum over `samples`.
    fn value_grad_samples(&self, w: &[f64], samples: &[usize], grad: &mut [f64]) -> f64;

    /// Coordinates touched by one sample. Defaults to every coordinate.
    fn sample_support(&self, _sample: usize, out: &mut Vec<usize>) {
        out.extend(0..self.dim());
    }
}

/// Iterates of a fixed-length run.
///
/// `gradients[i]` is the direction used for the step `w_i -> w_{i+1}`, so
/// `w_k - w_0 = -α Σ gradients` for a fixed rate. For full-batch gradient
/// descent these are `∇F(w_0) .. ∇F(w_{k-1})` and `final_gradient` holds
/// `∇F(w_k)`; for minibatch engines each entry is the sum of the minibatch
/// gradients applied during that pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub iterates: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<f64>>,
    pub final_gradient: Option<Vec<f64>>,
    /// Objective values at the iterates when the engine evaluates them
    /// (gradient descent only).
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.gradients.len()
    }

    pub fn last(&self) -> &[f64] {
        self.iterates.last().expect("trajectory always holds w_0")
    }

    pub fn first(&self) -> &[f64] {
        &self.iterates[0]
    }

    /// Full-batch gradients at `w_0 .. w_k` when available.
    pub fn gradients_at_iterates(&self) -> Option<Vec<&[f64]>> {
        let last = self.final_gradient.as_deref()?;
        Some(
            self.gradients
                .iter()
                .map(|g| g.as_slice())
                .chain(std::iter::once(last))
                .collect(),
        )
    }
}

/// `F(w) = ½ (w - c)ᵀ A (w - c)` with a dense symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    hessian: Vec<f64>,
    center: Vec<f64>,
}

impl Quadratic {
    /// `hessian` is row-major, `n × n`.
    pub fn dense(hessian: Vec<f64>, center: Vec<f64>) -> Self {
        assert_eq!(hessian.len(), center.len() * center.len());
        Self { hessian, center }
    }

    pub fn diagonal(diag: &[f64], center: Vec<f64>) -> Self {
        let n = diag.len();
        assert_eq!(n, center.len());
        let mut h = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            h[i * n + i] = *d;
        }
        Self::dense(h, center)
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn hessian(&self) -> &[f64] {
        &self.hessian
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.center.len();
        let diff: Vec<f64> = w.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        for (i, g) in grad.iter_mut().enumerate() {
            *g = self.hessian[i * n..(i + 1) * n]
                .iter()
                .zip(&diff)
                .map(|(h, x)| h * x)
                .sum();
        }
        0.5 * grad.iter().zip(&diff).map(|(g, x)| g * x).sum::<f64>()
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_value_and_gradient() {
        let q = Quadratic::dense(vec![2.0, 1.0, 1.0, 3.0], vec![1.0, -1.0]);
        let mut g = vec![0.0; 2];
        let v = q.value_grad(&[2.0, 0.0], &mut g);
        assert_eq!(g, vec![3.0, 4.0]);
        assert_eq!(v, 0.5 * (3.0 + 4.0));
        assert_eq!(q.value(&[1.0, -1.0]), 0.0);
    }
}
