//! Modified value iteration over the paired belief sets.
//!
//! One sweep applies the restricted Bellman operator once: every posterior is
//! backed up against the previous prior values (a minimum over actions), then
//! every prior is backed up against those fresh posterior values (a linear
//! program). The operator is a `gamma`-contraction in the sup norm, so the
//! recorded residuals shrink geometrically and the distance to the fixed
//! point is bounded by `residual * gamma / (1 - gamma)` on exit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefSets;
use crate::error::{Error, Result};
use crate::lp::{LpSkeleton, LpSolution, LpStatus, WarmLp};
use crate::model::PerceptionMdp;
use crate::SUPPORT_TOL;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Sup-norm residual below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Warm-start prior values (e.g. from a previous solve); zeros otherwise.
    pub init_prior_values: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            init_prior_values: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveResult {
    pub gamma: f64,
    pub beta: f64,
    pub tol: f64,
    /// Value per prior belief.
    pub prior_values: Vec<f64>,
    /// Value per posterior belief, consistent with `prior_values` through the
    /// action backup at exit.
    pub posterior_values: Vec<f64>,
    /// Optimal LP weights per prior, sparse (posterior index, weight).
    pub alpha: Vec<Vec<(usize, f64)>>,
    /// Minimizing action per posterior, lowest index on ties.
    pub best_action: Vec<usize>,
    /// Sup-norm change of the prior values after each sweep.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveResult {
    /// A-posteriori bound on the sup-norm distance to the fixed point.
    pub fn gap_bound(&self) -> f64 {
        match self.residuals.last() {
            Some(r) => r * self.gamma / (1.0 - self.gamma),
            None => f64::INFINITY,
        }
    }
}

/// Action backup for posterior `m`: `min_a [ c_a . bhat_m + gamma *
/// V(prior(m, a)) ]`, ties to the lowest action index.
pub fn posterior_backup(
    model: &PerceptionMdp,
    sets: &BeliefSets,
    m: usize,
    prior_values: &[f64],
) -> (f64, usize) {
    let bhat = sets.posteriors()[m].probs();
    let mut best_value = f64::INFINITY;
    let mut best_action = 0;
    for a in 0..model.num_actions {
        let stage: f64 = bhat
            .iter()
            .enumerate()
            .map(|(s, &p)| p * model.cost[s][a])
            .sum();
        let value = stage + model.gamma * prior_values[sets.prior_index(m, a)];
        if value < best_value {
            best_value = value;
            best_action = a;
        }
    }
    (best_value, best_action)
}

/// Mixture backup for one prior: assemble and solve its LP against the given
/// posterior values. Returns the optimum and the sparse weights.
pub fn prior_backup(
    sets: &BeliefSets,
    prior_idx: usize,
    posterior_values: &[f64],
    beta: f64,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let skeleton = LpSkeleton::build(&sets.priors()[prior_idx], sets.posteriors(), SUPPORT_TOL)?;
    solve_skeleton(&skeleton, prior_idx, posterior_values, beta)
}

fn solve_skeleton(
    skeleton: &LpSkeleton,
    prior_idx: usize,
    posterior_values: &[f64],
    beta: f64,
) -> Result<(f64, Vec<(usize, f64)>)> {
    let costs = skeleton.costs(posterior_values, beta);
    sparse_backup(skeleton.solve_with_costs(&costs), prior_idx)
}

fn sparse_backup(solution: LpSolution, prior_idx: usize) -> Result<(f64, Vec<(usize, f64)>)> {
    if solution.status != LpStatus::Optimal {
        return Err(Error::LpFailed {
            prior_index: Some(prior_idx),
            status: solution.status,
        });
    }
    let sparse: Vec<(usize, f64)> = solution
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(m, &a)| (m, a))
        .collect();
    Ok((solution.objective, sparse))
}

/// Sup-norm distance between consecutive value vectors.
pub fn bellman_residual(prev: &[f64], next: &[f64]) -> Result<f64> {
    if prev.len() != next.len() {
        return Err(Error::LengthMismatch {
            left: prev.len(),
            right: next.len(),
        });
    }
    Ok(prev
        .iter()
        .zip(next)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Runs value iteration to the requested tolerance. Each sweep is one exact
/// application of the restricted Bellman operator: a parallel posterior phase
/// against the previous prior values, a barrier, then a parallel prior phase
/// against the fresh posterior values (no in-place updates).
pub fn value_iteration(
    model: &PerceptionMdp,
    sets: &BeliefSets,
    options: &SolveOptions,
) -> Result<SolveResult> {
    model.ensure_valid()?;
    sets.validate(model)?;
    if !options.tol.is_finite() || options.tol <= 0.0 {
        return Err(Error::BadTolerance { tol: options.tol });
    }
    let num_priors = sets.num_priors();
    let num_posteriors = sets.num_posteriors();

    let mut prior_values = match &options.init_prior_values {
        Some(init) => {
            if init.len() != num_priors {
                return Err(Error::LengthMismatch {
                    left: init.len(),
                    right: num_priors,
                });
            }
            init.clone()
        }
        None => vec![0.0; num_priors],
    };

    // support sets, admissible columns, and divergences never change across
    // sweeps; only the LP cost vectors do
    let skeletons: Vec<LpSkeleton> = sets
        .priors()
        .par_iter()
        .map(|b| LpSkeleton::build(b, sets.posteriors(), SUPPORT_TOL))
        .collect::<Result<_>>()?;

    // persistent simplex state per prior: each sweep re-enters at the basis
    // that was optimal for the previous posterior values
    let mut warm: Vec<WarmLp> = skeletons
        .iter()
        .enumerate()
        .map(|(i, sk)| {
            WarmLp::new(sk).ok_or(Error::LpFailed {
                prior_index: Some(i),
                status: LpStatus::Infeasible,
            })
        })
        .collect::<Result<_>>()?;

    let posterior_phase = |values: &[f64]| -> (Vec<f64>, Vec<usize>) {
        (0..num_posteriors)
            .into_par_iter()
            .map(|m| posterior_backup(model, sets, m, values))
            .unzip()
    };

    let mut residuals = Vec::new();
    let mut alpha: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_priors];
    let mut converged = false;

    for _ in 0..options.max_iter {
        let (posterior_values, _) = posterior_phase(&prior_values);
        let backed: Vec<(f64, Vec<(usize, f64)>)> = skeletons
            .par_iter()
            .zip(warm.par_iter_mut())
            .enumerate()
            .map(|(i, (sk, lp))| {
                let costs = sk.costs(&posterior_values, model.beta);
                sparse_backup(lp.solve(sk, &costs), i)
            })
            .collect::<Result<_>>()?;
        let mut next_values = Vec::with_capacity(num_priors);
        let mut next_alpha = Vec::with_capacity(num_priors);
        for (value, weights) in backed {
            next_values.push(value);
            next_alpha.push(weights);
        }
        let residual = bellman_residual(&prior_values, &next_values)?;
        residuals.push(residual);
        prior_values = next_values;
        alpha = next_alpha;
        if residual <= options.tol {
            converged = true;
            break;
        }
    }

    // re-derive posterior values and actions from the final prior values so
    // the stored tables satisfy the action backup exactly
    let (posterior_values, best_action) = posterior_phase(&prior_values);

    Ok(SolveResult {
        gamma: model.gamma,
        beta: model.beta,
        tol: options.tol,
        prior_values,
        posterior_values,
        alpha,
        best_action,
        residuals: residuals.clone(),
        iterations: residuals.len(),
        converged,
    })
}
