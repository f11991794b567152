use serde::{Deserialize, Serialize};

use super::{EsAlgorithm, EsStrategy, ProxLambda, ProxStrategy, UpdateStrategy};
use crate::error::{Error, Result};
use crate::model::{Batch, LinearModel, LogisticObjective, ProxConfig, ProxObjective, ProxPenalty};
use crate::optim::{
    lbfgs_minimize, run_gd, run_sgd, run_sgd_percoord, GdConfig, LbfgsConfig, PerCoordConfig, PerCoordState,
    SgdConfig, Trajectory,
};
use crate::seed::derive_seed;

/// Learner state carried from one round to the next besides the weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundState {
    pub counts: Option<PerCoordState>,
    pub fisher: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EsOutcome {
    pub model: LinearModel,
    pub counts: Option<PerCoordState>,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct ProxOutcome {
    pub model: LinearModel,
    pub fisher: Option<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

/// `passes` passes of the configured optimizer over `batch`, initialized at
/// `model`. L-BFGS runs return a two-point trajectory (start and end).
pub fn es_update(
    model: &LinearModel,
    batch: &Batch,
    strategy: &EsStrategy,
    counts: Option<&PerCoordState>,
) -> Result<EsOutcome> {
    es_inner(model, batch, strategy, counts).map_err(|e| e.in_batch(batch.id))
}

fn es_inner(
    model: &LinearModel,
    batch: &Batch,
    strategy: &EsStrategy,
    counts: Option<&PerCoordState>,
) -> Result<EsOutcome> {
    UpdateStrategy::Es(strategy.clone()).validate()?;
    let objective = LogisticObjective::new(batch, model.dimension())?;
    let w0 = model.params();
    let round_seed = derive_seed(strategy.seed, "es-round", batch.id as u64);
    let (trajectory, counts) = match strategy.algorithm {
        EsAlgorithm::Gd => (
            run_gd(&objective, &w0, &GdConfig::new(strategy.learning_rate, strategy.passes))?,
            counts.cloned(),
        ),
        EsAlgorithm::Sgd => {
            let cfg = SgdConfig {
                learning_rate: strategy.learning_rate,
                epochs: strategy.passes,
                minibatch_size: strategy.minibatch_size,
                rng_seed: round_seed,
                shuffle: true,
            };
            (run_sgd(&objective, &w0, &cfg)?, counts.cloned())
        }
        EsAlgorithm::SgdPerCoordinate => {
            let fresh;
            let state = match counts {
                Some(c) => c,
                None => {
                    fresh = PerCoordState::new(w0.len());
                    &fresh
                }
            };
            let cfg = PerCoordConfig {
                epochs: strategy.passes,
                shuffle: false,
                rng_seed: round_seed,
            };
            let (t, s) = run_sgd_percoord(&objective, &w0, state, &cfg)?;
            (t, Some(s))
        }
        EsAlgorithm::Lbfgs => {
            let cfg = LbfgsConfig {
                memory: 10,
                gradient_tolerance: f64::MIN_POSITIVE,
                max_iterations: strategy.passes,
            };
            let r = lbfgs_minimize(&objective, &w0, &cfg)?;
            (
                Trajectory {
                    iterates: vec![w0.clone(), r.w],
                    gradients: Vec::new(),
                    final_gradient: None,
                    values: Vec::new(),
                },
                counts.cloned(),
            )
        }
    };
    Ok(EsOutcome {
        model: LinearModel::from_params(trajectory.last()),
        counts,
        trajectory,
    })
}

/// Minimizes the proximal objective anchored at `model` with L-BFGS.
///
/// For the Fisher variant, `fisher` is the accumulated diagonal from earlier
/// rounds (zeros when absent); the returned state folds in this batch's
/// diagonal evaluated at the new model.
pub fn prox_update(
    model: &LinearModel,
    batch: &Batch,
    strategy: &ProxStrategy,
    fisher: Option<&[f64]>,
) -> Result<ProxOutcome> {
    prox_inner(model, batch, strategy, fisher).map_err(|e| e.in_batch(batch.id))
}

fn prox_inner(
    model: &LinearModel,
    batch: &Batch,
    strategy: &ProxStrategy,
    fisher: Option<&[f64]>,
) -> Result<ProxOutcome> {
    UpdateStrategy::Prox(strategy.clone()).validate()?;
    let d = model.dimension();
    let penalty = match &strategy.lambda {
        ProxLambda::Uniform { lambda } => ProxPenalty::Uniform(*lambda),
        ProxLambda::PerCoordinate { lambdas } => ProxPenalty::PerCoordinate(lambdas.clone()),
        ProxLambda::Fisher { floor, scale, .. } => {
            let zeros;
            let acc = match fisher {
                Some(f) => f,
                None => {
                    zeros = vec![0.0; d + 1];
                    &zeros
                }
            };
            if acc.len() != d + 1 {
                return Err(Error::DimensionMismatch {
                    expected: d + 1,
                    found: acc.len(),
                });
            }
            ProxPenalty::PerCoordinate(acc.iter().map(|a| (scale * a).max(*floor)).collect())
        }
    };
    let cfg = ProxConfig {
        anchor: model.clone(),
        penalty,
        regularize_bias: strategy.regularize_bias,
    };
    let loss = LogisticObjective::new(batch, d)?;
    let objective = ProxObjective::new(&loss, &cfg)?;
    let result = lbfgs_minimize(&objective, &model.params(), &strategy.lbfgs)?;
    let updated = LinearModel::from_params(&result.w);

    let fisher_state = match &strategy.lambda {
        ProxLambda::Fisher { decay, .. } => {
            let current = loss.fisher_diagonal(&result.w);
            Some(match fisher {
                Some(prev) => fisher_accumulate(prev, &current, *decay)?,
                None => current,
            })
        }
        _ => fisher.map(|f| f.to_vec()),
    };
    Ok(ProxOutcome {
        model: updated,
        fisher: fisher_state,
        iterations: result.iterations,
        converged: result.converged,
    })
}

/// Diagonal of the logistic-loss Hessian (the Fisher information) on
/// `batch` at `model`, bias last.
pub fn fisher_diag(model: &LinearModel, batch: &Batch) -> Result<Vec<f64>> {
    let objective = LogisticObjective::new(batch, model.dimension())?;
    Ok(objective.fisher_diagonal(&model.params()))
}

/// `decay · prev + current`.
pub fn fisher_accumulate(prev: &[f64], current: &[f64], decay: f64) -> Result<Vec<f64>> {
    if prev.len() != current.len() {
        return Err(Error::DimensionMismatch {
            expected: prev.len(),
            found: current.len(),
        });
    }
    if !(0.0..=1.0).contains(&decay) {
        return Err(Error::InvalidConfig(format!("decay must be in [0, 1], got {decay}")));
    }
    Ok(prev.iter().zip(current).map(|(p, c)| decay * p + c).collect())
}

/// One round of either scheme.
pub fn update(
    model: &LinearModel,
    batch: &Batch,
    strategy: &UpdateStrategy,
    state: &RoundState,
) -> Result<(LinearModel, RoundState)> {
    match strategy {
        UpdateStrategy::Es(es) => {
            let out = es_update(model, batch, es, state.counts.as_ref())?;
            Ok((
                out.model,
                RoundState {
                    counts: out.counts,
                    fisher: state.fisher.clone(),
                },
            ))
        }
        UpdateStrategy::Prox(p) => {
            let out = prox_update(model, batch, p, state.fisher.as_deref())?;
            Ok((
                out.model,
                RoundState {
                    counts: state.counts.clone(),
                    fisher: out.fisher,
                },
            ))
        }
    }
}
