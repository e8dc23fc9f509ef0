//! Executable perception strategy and action map recovered from a solve.
//!
//! At a prior `b` with optimal mixture weights `alpha`, the perception
//! kernel is `P(m | s) = alpha_m * bhat_m(s) / b(s)` on the support of `b`:
//! observing `m` then applying Bayes' rule lands exactly on the stored
//! posterior `bhat_m`, and the marginal probability of observing `m` is
//! `alpha_m`. Rows for states outside the support never fire (the true state
//! stays inside the prior's support in closed loop) and are fixed to a
//! deterministic observation of the nearest vertex posterior for
//! reproducibility. Acting is just a lookup: each posterior has a stored
//! minimizing action.

use serde::{Deserialize, Serialize};

use crate::belief::{kl_divergence, project_nearest, Belief, BeliefSets};
use crate::error::{Error, Result};
use crate::solver::SolveResult;
use crate::{LP_TOL, SUPPORT_TOL};

/// Deterministic policy over the paired belief sets: sparse perception
/// weights per prior (kernels are expanded on demand to keep memory at one
/// weight list per prior instead of a dense states-by-posteriors matrix) and
/// one action per posterior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerceptionActionPolicy {
    alpha: Vec<Vec<(usize, f64)>>,
    actions: Vec<usize>,
}

impl PerceptionActionPolicy {
    /// Extracts the policy tables from a solve and validates them against
    /// the belief sets.
    pub fn from_result(result: &SolveResult, sets: &BeliefSets) -> Result<Self> {
        let policy = Self {
            alpha: result.alpha.clone(),
            actions: result.best_action.clone(),
        };
        policy.validate(sets)?;
        Ok(policy)
    }

    /// Checks that the tables index into `sets` and that every weight list
    /// is a probability distribution.
    pub fn validate(&self, sets: &BeliefSets) -> Result<()> {
        if self.alpha.len() != sets.num_priors() {
            return Err(Error::LengthMismatch {
                left: self.alpha.len(),
                right: sets.num_priors(),
            });
        }
        if self.actions.len() != sets.num_posteriors() {
            return Err(Error::LengthMismatch {
                left: self.actions.len(),
                right: sets.num_posteriors(),
            });
        }
        for weights in &self.alpha {
            let mut total = 0.0;
            for &(m, w) in weights {
                if m >= sets.num_posteriors() {
                    return Err(Error::IndexOutOfRange {
                        what: "posterior set",
                        index: m,
                        len: sets.num_posteriors(),
                    });
                }
                if !(w > 0.0) || !w.is_finite() {
                    return Err(Error::NegativeBeliefEntry { index: m, value: w });
                }
                total += w;
            }
            if (total - 1.0).abs() > LP_TOL {
                return Err(Error::AlphaSum { sum: total });
            }
        }
        Ok(())
    }

    /// Stored minimizing action for posterior `m`.
    pub fn action_of(&self, m: usize) -> usize {
        self.actions[m]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Sparse mixture weights for prior `b_idx`.
    pub fn alpha(&self, b_idx: usize) -> &[(usize, f64)] {
        &self.alpha[b_idx]
    }

    pub fn alphas(&self) -> &[Vec<(usize, f64)>] {
        &self.alpha
    }

    /// Dense perception kernel at prior `b_idx`; see [`reconstruct_kernel`].
    pub fn kernel(&self, b_idx: usize, sets: &BeliefSets) -> Result<Vec<Vec<f64>>> {
        reconstruct_kernel(b_idx, &self.alpha[b_idx], sets)
    }

    /// Sparse observation distribution in true state `state` at prior
    /// `b_idx`: one kernel row without materializing the matrix. For a state
    /// outside the prior's support the row is a deterministic observation of
    /// the nearest vertex posterior.
    pub fn observation_row(
        &self,
        b_idx: usize,
        state: usize,
        sets: &BeliefSets,
    ) -> Result<Vec<(usize, f64)>> {
        let prior = &sets.priors()[b_idx];
        if state >= prior.len() {
            return Err(Error::StateOutOfRange {
                state,
                num_states: prior.len(),
            });
        }
        let mass = prior.probs()[state];
        if mass <= SUPPORT_TOL {
            let (m, _) = project_nearest(&Belief::vertex(prior.len(), state), sets.posteriors(), SUPPORT_TOL)?;
            return Ok(vec![(m, 1.0)]);
        }
        Ok(self.alpha[b_idx]
            .iter()
            .map(|&(m, w)| (m, w * sets.posteriors()[m].probs()[state] / mass))
            .filter(|&(_, p)| p > 0.0)
            .collect())
    }

    /// Expected information content of the observation at prior `b_idx`, in
    /// nats; see [`stage_information`].
    pub fn information(&self, b_idx: usize, sets: &BeliefSets) -> Result<f64> {
        stage_information(b_idx, &self.alpha[b_idx], sets)
    }
}

/// Dense perception kernel `P[s][m]` at prior `b_idx`: on supported states
/// `P[s][m] = alpha_m * bhat_m(s) / b(s)`; unsupported states observe their
/// nearest vertex posterior deterministically. Every row is a probability
/// distribution.
pub fn reconstruct_kernel(
    b_idx: usize,
    alpha: &[(usize, f64)],
    sets: &BeliefSets,
) -> Result<Vec<Vec<f64>>> {
    let prior = sets
        .priors()
        .get(b_idx)
        .ok_or(Error::IndexOutOfRange {
            what: "prior set",
            index: b_idx,
            len: sets.num_priors(),
        })?;
    let total: f64 = alpha.iter().map(|&(_, w)| w).sum();
    if (total - 1.0).abs() > LP_TOL {
        return Err(Error::AlphaSum { sum: total });
    }
    let n = prior.len();
    let num_posteriors = sets.num_posteriors();
    let mut kernel = vec![vec![0.0; num_posteriors]; n];
    for (s, row) in kernel.iter_mut().enumerate() {
        let mass = prior.probs()[s];
        if mass <= SUPPORT_TOL {
            let (m, _) = project_nearest(&Belief::vertex(n, s), sets.posteriors(), SUPPORT_TOL)?;
            row[m] = 1.0;
            continue;
        }
        for &(m, w) in alpha {
            if m >= num_posteriors {
                return Err(Error::IndexOutOfRange {
                    what: "posterior set",
                    index: m,
                    len: num_posteriors,
                });
            }
            row[m] = w * sets.posteriors()[m].probs()[s] / mass;
        }
    }
    Ok(kernel)
}

/// Expected per-step information in nats at prior `b_idx` under mixture
/// weights `alpha`: the weighted divergence `sum_m alpha_m D(bhat_m || b)`,
/// which equals the mutual information between the state and the observation
/// drawn from the reconstructed kernel.
pub fn stage_information(b_idx: usize, alpha: &[(usize, f64)], sets: &BeliefSets) -> Result<f64> {
    let prior = &sets.priors()[b_idx];
    let mut total = 0.0;
    for &(m, w) in alpha {
        if w == 0.0 {
            continue;
        }
        total += w * kl_divergence(&sets.posteriors()[m], prior)?;
    }
    Ok(total)
}

/// Mutual information in nats between the state distributed as `prior` and
/// the observation drawn from `kernel` (rows indexed by state): the double
/// sum `sum_{s,m} b(s) P[s][m] ln(P[s][m] / p(m))` with marginal
/// `p(m) = sum_s b(s) P[s][m]`.
pub fn mutual_information(prior: &Belief, kernel: &[Vec<f64>]) -> f64 {
    let num_obs = kernel.first().map_or(0, Vec::len);
    let mut marginal = vec![0.0; num_obs];
    for (s, row) in kernel.iter().enumerate() {
        let mass = prior.probs()[s];
        for (m, &p) in row.iter().enumerate() {
            marginal[m] += mass * p;
        }
    }
    let mut info = 0.0;
    for (s, row) in kernel.iter().enumerate() {
        let mass = prior.probs()[s];
        if mass <= SUPPORT_TOL {
            continue;
        }
        for (m, &p) in row.iter().enumerate() {
            if p > 0.0 && marginal[m] > 0.0 {
                info += mass * p * (p / marginal[m]).ln();
            }
        }
    }
    info
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::bayes_update;
    use crate::model::{three_state, PerceptionMdp};
    use crate::solver::{value_iteration, SolveOptions};

    fn identity_model(gamma: f64, beta: f64) -> PerceptionMdp {
        PerceptionMdp::new(
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![0.0], vec![0.0]],
            gamma,
            beta,
        )
        .unwrap()
    }

    fn two_state_sets() -> (PerceptionMdp, BeliefSets) {
        let model = identity_model(0.9, 1.0);
        let posteriors = vec![
            Belief::vertex(2, 0),
            Belief::vertex(2, 1),
            Belief::uniform(2),
        ];
        let sets = BeliefSets::build(posteriors, &model).unwrap();
        (model, sets)
    }

    fn uniform_prior_index(sets: &BeliefSets) -> usize {
        sets.priors()
            .iter()
            .position(|b| b.max_norm_distance(&Belief::uniform(2)) == 0.0)
            .unwrap()
    }

    #[test]
    fn lazy_mixture_gives_uninformative_kernel() {
        let (_, sets) = two_state_sets();
        let b_idx = uniform_prior_index(&sets);
        let kernel = reconstruct_kernel(b_idx, &[(2, 1.0)], &sets).unwrap();
        // the single observation lands on the posterior equal to the prior
        assert_eq!(kernel[0], vec![0.0, 0.0, 1.0]);
        assert_eq!(kernel[1], vec![0.0, 0.0, 1.0]);
        let info = stage_information(b_idx, &[(2, 1.0)], &sets).unwrap();
        assert_eq!(info, 0.0);
    }

    #[test]
    fn vertex_split_gives_perfect_observation() {
        let (_, sets) = two_state_sets();
        let b_idx = uniform_prior_index(&sets);
        let alpha = [(0, 0.5), (1, 0.5)];
        let kernel = reconstruct_kernel(b_idx, &alpha, &sets).unwrap();
        // 0.5 * 1 / 0.5 = 1: each state is observed exactly
        assert_eq!(kernel[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(kernel[1], vec![0.0, 1.0, 0.0]);
        let info = stage_information(b_idx, &alpha, &sets).unwrap();
        assert!((info - 2f64.ln()).abs() <= 1e-12);
        let prior = &sets.priors()[b_idx];
        let direct = mutual_information(prior, &kernel);
        assert!((direct - 2f64.ln()).abs() <= 1e-12);
    }

    #[test]
    fn vertex_prior_rows_are_deterministic() {
        let (_, sets) = two_state_sets();
        let b_idx = sets
            .priors()
            .iter()
            .position(|b| b.max_norm_distance(&Belief::vertex(2, 0)) == 0.0)
            .unwrap();
        let alpha = [(sets.vertex_index(0), 1.0)];
        let kernel = reconstruct_kernel(b_idx, &alpha, &sets).unwrap();
        // supported row observes the matching vertex with certainty
        let mut expected = vec![0.0; sets.num_posteriors()];
        expected[sets.vertex_index(0)] = 1.0;
        assert_eq!(kernel[0], expected);
        // the unsupported row falls back to its own vertex observation
        let mut fallback = vec![0.0; sets.num_posteriors()];
        fallback[sets.vertex_index(1)] = 1.0;
        assert_eq!(kernel[1], fallback);
    }

    #[test]
    fn kernel_rejects_bad_weights() {
        let (_, sets) = two_state_sets();
        let b_idx = uniform_prior_index(&sets);
        let err = reconstruct_kernel(b_idx, &[(0, 0.25), (1, 0.25)], &sets).unwrap_err();
        assert!(matches!(err, Error::AlphaSum { .. }));
    }

    #[test]
    fn observation_row_matches_kernel_row() {
        let (_, sets) = two_state_sets();
        let b_idx = uniform_prior_index(&sets);
        let alpha_list = [(0, 0.25), (1, 0.25), (2, 0.5)];
        let policy = PerceptionActionPolicy {
            alpha: vec![alpha_list.to_vec(); sets.num_priors()],
            actions: vec![0; sets.num_posteriors()],
        };
        policy.validate(&sets).unwrap();
        let kernel = policy.kernel(b_idx, &sets).unwrap();
        for s in 0..2 {
            let row = policy.observation_row(b_idx, s, &sets).unwrap();
            let mut dense = vec![0.0; sets.num_posteriors()];
            for (m, w) in row {
                dense[m] = w;
            }
            assert_eq!(dense, kernel[s]);
        }
    }

    #[test]
    fn solved_policy_satisfies_kernel_identities() {
        let model = three_state();
        let sets = BeliefSets::from_grid(&model, 0.2).unwrap();
        let result = value_iteration(&model, &sets, &SolveOptions::default()).unwrap();
        let policy = PerceptionActionPolicy::from_result(&result, &sets).unwrap();
        for b_idx in 0..sets.num_priors() {
            let prior = &sets.priors()[b_idx];
            let kernel = policy.kernel(b_idx, &sets).unwrap();
            let alpha = policy.alpha(b_idx);
            let mut dense_alpha = vec![0.0; sets.num_posteriors()];
            for &(m, w) in alpha {
                dense_alpha[m] = w;
            }
            for row in &kernel {
                // rows are distributions
                let total: f64 = row.iter().sum();
                assert!((total - 1.0).abs() <= 1e-9, "row sum {total} at prior {b_idx}");
                assert!(row.iter().all(|&p| p >= 0.0));
            }
            // observation marginals recover alpha
            for m in 0..sets.num_posteriors() {
                let marginal: f64 = kernel
                    .iter()
                    .zip(prior.probs())
                    .map(|(row, &mass)| row[m] * mass)
                    .sum();
                if prior.probs().iter().all(|&p| p > SUPPORT_TOL) {
                    assert!(
                        (marginal - dense_alpha[m]).abs() <= 1e-9,
                        "marginal {marginal} vs alpha {} at prior {b_idx}, posterior {m}",
                        dense_alpha[m]
                    );
                }
            }
            // mixture of posteriors weighted by marginals reconstructs the prior
            for s in 0..model.num_states {
                let mut recovered = 0.0;
                for m in 0..sets.num_posteriors() {
                    let marginal: f64 = kernel
                        .iter()
                        .zip(prior.probs())
                        .map(|(row, &mass)| row[m] * mass)
                        .sum();
                    recovered += marginal * sets.posteriors()[m].probs()[s];
                }
                assert!((recovered - prior.probs()[s]).abs() <= 1e-9);
            }
            // weighted-divergence information equals the double-sum evaluation
            let from_alpha = policy.information(b_idx, &sets).unwrap();
            let direct = mutual_information(prior, &kernel);
            assert!(
                (from_alpha - direct).abs() <= 1e-9,
                "information mismatch at prior {b_idx}: {from_alpha} vs {direct}"
            );
            // Bayes update on each observed column reproduces the posterior
            for &(m, w) in alpha {
                if w <= 0.0 {
                    continue;
                }
                let column: Vec<f64> = kernel.iter().map(|row| row[m].min(1.0)).collect();
                let (updated, marginal) = bayes_update(prior, &column).unwrap();
                assert!((marginal - w).abs() <= 1e-9);
                assert!(updated.max_norm_distance(&sets.posteriors()[m]) <= 1e-9);
            }
        }
        // stored actions recompute as argmins at the fixed point
        for (m, &a) in policy.actions().iter().enumerate() {
            let (_, expect) =
                crate::solver::posterior_backup(&model, &sets, m, &result.prior_values);
            assert_eq!(a, expect);
            assert_eq!(policy.action_of(m), a);
        }
    }

    #[test]
    fn validate_catches_inconsistent_tables() {
        let (_, sets) = two_state_sets();
        let bad_len = PerceptionActionPolicy {
            alpha: vec![vec![(0, 1.0)]],
            actions: vec![0; sets.num_posteriors()],
        };
        assert!(bad_len.validate(&sets).is_err());
        let bad_sum = PerceptionActionPolicy {
            alpha: vec![vec![(0, 0.5)]; sets.num_priors()],
            actions: vec![0; sets.num_posteriors()],
        };
        assert!(matches!(
            bad_sum.validate(&sets).unwrap_err(),
            Error::AlphaSum { .. }
        ));
        let bad_index = PerceptionActionPolicy {
            alpha: vec![vec![(99, 1.0)]; sets.num_priors()],
            actions: vec![0; sets.num_posteriors()],
        };
        assert!(matches!(
            bad_index.validate(&sets).unwrap_err(),
            Error::IndexOutOfRange { .. }
        ));
    }
}
