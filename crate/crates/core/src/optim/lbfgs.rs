use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{all_finite, dot, inf_norm, Objective};
use crate::error::{Error, Result};

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_HALVINGS: usize = 60;

/// Limited-memory BFGS with a backtracking Armijo line search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    /// Stop once `||∇f||∞` is at or below this.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            gradient_tolerance: 1e-8,
            max_iterations: 500,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=50).contains(&self.memory) {
            return Err(Error::InvalidConfig(format!(
                "lbfgs memory must be in [1, 50], got {}",
                self.memory
            )));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidConfig("gradient tolerance must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsResult {
    pub w: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// `||∇f(w)||∞` at the returned point.
    pub grad_norm: f64,
    /// True when the gradient tolerance was met, false when the iteration
    /// cap was hit first.
    pub converged: bool,
}

pub fn lbfgs_minimize(objective: &dyn Objective, w0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsResult> {
    cfg.validate()?;
    if objective.dim() != w0.len() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            found: w0.len(),
        });
    }
    let n = w0.len();
    let mut w = w0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = objective.value_grad(&w, &mut g);
    if !(f.is_finite() && all_finite(&g)) {
        return Err(Error::Divergence { iteration: 0 });
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut w_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alphas = vec![0.0; cfg.memory];

    for iter in 0..cfg.max_iterations {
        let gnorm = inf_norm(&g);
        if gnorm <= cfg.gradient_tolerance {
            return Ok(LbfgsResult {
                w,
                value: f,
                iterations: iter,
                grad_norm: gnorm,
                converged: true,
            });
        }

        let mut d = two_loop(&g, &history, &mut alphas);
        let mut slope = dot(&d, &g);
        if history.is_empty() || !(slope < 0.0) {
            history.clear();
            let scale = 1.0 / dot(&g, &g).sqrt().max(1.0);
            d = g.iter().map(|x| -x * scale).collect();
            slope = dot(&d, &g);
        }

        // accept values within floating-point noise of the current one so
        // the search does not stall right at the optimum
        let slack = 64.0 * f64::EPSILON * (1.0 + f.abs());
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            for ((wn, wi), di) in w_new.iter_mut().zip(&w).zip(&d) {
                *wn = wi + step * di;
            }
            let f_new = objective.value_grad(&w_new, &mut g_new);
            if f_new.is_finite() && all_finite(&g_new) && f_new <= f + ARMIJO_C * step * slope + slack {
                let s: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
                    if history.len() == cfg.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                std::mem::swap(&mut w, &mut w_new);
                std::mem::swap(&mut g, &mut g_new);
                f = f_new;
                accepted = true;
                break;
            }
            step *= BACKTRACK;
        }
        if !accepted {
            return Err(Error::LineSearchStall {
                iteration: iter,
                step,
                grad_norm: gnorm,
            });
        }
    }

    let gnorm = inf_norm(&g);
    Ok(LbfgsResult {
        w,
        value: f,
        iterations: cfg.max_iterations,
        grad_norm: gnorm,
        converged: gnorm <= cfg.gradient_tolerance,
    })
}

/// `-H g` for the implicit inverse-Hessian approximation.
fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, alphas: &mut [f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    for (k, (s, y, rho)) in history.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[k] = a;
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|x| *x *= gamma);
    }
    for (k, (s, y, rho)) in history.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alphas[k] - b) * si;
        }
    }
    q.iter_mut().for_each(|x| *x = -*x);
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Quadratic;

    #[test]
    fn quadratic_converges_fast() {
        let f = Quadratic::dense(
            vec![4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0],
            vec![1.0, -2.0, 0.5],
        );
        let r = lbfgs_minimize(&f, &[0.0; 3], &LbfgsConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 3 + 5, "took {}", r.iterations);
        for (a, b) in r.w.iter().zip(f.center()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn already_optimal_start() {
        let f = Quadratic::diagonal(&[1.0, 2.0], vec![3.0, 4.0]);
        let r = lbfgs_minimize(&f, &[3.0, 4.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let f = Quadratic::diagonal(&[1.0, 1e4], vec![3.0, 4.0]);
        let cfg = LbfgsConfig {
            max_iterations: 1,
            ..Default::default()
        };
        let r = lbfgs_minimize(&f, &[0.0, 0.0], &cfg).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn memory_bounds_validated() {
        let f = Quadratic::diagonal(&[1.0], vec![0.0]);
        for m in [0, 51] {
            let cfg = LbfgsConfig {
                memory: m,
                ..Default::default()
            };
            assert!(lbfgs_minimize(&f, &[1.0], &cfg).is_err());
        }
    }

    struct Nan;
    impl Objective for Nan {
        fn dim(&self) -> usize {
            1
        }
        fn value_grad(&self, w: &[f64], grad: &mut [f64]) -> f64 {
            if w[0] == 0.0 {
                grad[0] = 1.0;
                1.0
            } else {
                grad[0] = f64::NAN;
                f64::NAN
            }
        }
    }

    #[test]
    fn stalls_when_no_step_is_acceptable() {
        let err = lbfgs_minimize(&Nan, &[0.0], &LbfgsConfig::default()).unwrap_err();
        assert!(matches!(err, Error::LineSearchStall { iteration: 0, .. }));
    }
}
