//! Closed-loop Monte-Carlo execution of a synthesized policy.
//!
//! A rollout alternates the agent's bookkeeping with the environment: at
//! prior index `b` with true state `s`, sample an observation `m` from the
//! kernel row of `s`, act with the stored action for posterior `m`, incur
//! `C(s, a)`, draw the next state from the transition row, and advance the
//! prior through the `(m, a)` index map. The agent touches only indices into
//! the belief sets — by construction it never leaves them — while the
//! environment alone knows the true state.
//!
//! Randomness comes from a counter-based generator with one stream per
//! trial, so batches are reproducible and independent of execution order.
//! Per trial the draws are: one uniform for the initial state (when it is
//! sampled), then per step one uniform for the observation and one for the
//! transition.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{bayes_update, project_nearest, BeliefSets};
use crate::error::{Error, Result};
use crate::model::PerceptionMdp;
use crate::policy::PerceptionActionPolicy;
use crate::SUPPORT_TOL;

/// One simulated step: the true state, the agent's indices, and the stage
/// costs. The observation is the sampled posterior index, so the two fields
/// agree; both are recorded because consistency between them is exactly what
/// trace verification checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: usize,
    pub state: usize,
    pub prior: usize,
    pub observation: usize,
    pub posterior: usize,
    pub action: usize,
    pub cost: f64,
    /// Expected information of the observation at this step's prior, nats.
    pub information: f64,
}

/// A full simulated trajectory, reproducible from `(seed, stream)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTrace {
    pub steps: Vec<StepRecord>,
    /// State reached after the last step.
    pub final_state: usize,
    pub horizon: usize,
    pub seed: u64,
    pub stream: u64,
    /// Discounted environmental cost over the horizon.
    pub discounted_cost: f64,
    /// Discounted information over the horizon, nats.
    pub discounted_information: f64,
}

/// Per-time-step state-visit counts over a batch of trials. Stored as
/// integer counts so the per-slice total is exactly the trial count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidenceHistogram {
    counts: Vec<Vec<u64>>,
    trials: usize,
}

impl ResidenceHistogram {
    /// Builds a histogram from per-time-step visit counts; every slice must
    /// account for every trial.
    pub fn from_counts(counts: Vec<Vec<u64>>, trials: usize) -> Result<Self> {
        let histogram = Self { counts, trials };
        histogram.validate()?;
        Ok(histogram)
    }

    /// Number of recorded time steps (horizon + 1: the initial state and one
    /// per transition).
    pub fn num_time_steps(&self) -> usize {
        self.counts.len()
    }

    pub fn num_states(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    /// Fraction of trials in `state` at time `t`.
    pub fn fraction(&self, t: usize, state: usize) -> f64 {
        self.counts[t][state] as f64 / self.trials as f64
    }

    /// Visit distribution at time `t`.
    pub fn slice(&self, t: usize) -> Vec<f64> {
        (0..self.num_states()).map(|s| self.fraction(t, s)).collect()
    }

    /// Confirms every time slice is a probability distribution.
    pub fn validate(&self) -> Result<()> {
        for (t, row) in self.counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total != self.trials as u64 {
                return Err(Error::TraceInconsistent(format!(
                    "time slice {t} counts {total} trials, expected {}",
                    self.trials
                )));
            }
        }
        Ok(())
    }
}

/// Discounted-cost statistics over a batch, split into environmental and
/// information components. Infinite-horizon sums are truncated at `horizon`;
/// `tail_bound` is the geometric bound on everything beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub trials: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub beta: f64,
    pub env_mean: f64,
    pub env_se: f64,
    pub info_mean: f64,
    pub info_se: f64,
    /// Mean of environmental plus beta-weighted information cost.
    pub total_mean: f64,
    pub total_se: f64,
    pub tail_bound: f64,
}

/// Batch specification. `initial_state` of `None` samples the start state
/// from the initial prior; `value_sup` scales the reported truncation bound
/// (pass the largest planned value).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchConfig {
    pub initial_prior: usize,
    pub initial_state: Option<usize>,
    pub horizon: usize,
    pub trials: usize,
    pub seed: u64,
    pub value_sup: f64,
    pub keep_traces: bool,
}

/// Histogram, cost statistics, and (when requested) the raw traces of a
/// batch of rollouts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub histogram: ResidenceHistogram,
    pub costs: CostSummary,
    pub traces: Vec<RolloutTrace>,
}

/// Agreement between the planned value at a prior and the mean discounted
/// cost actually incurred when executing the policy from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExecutionComparison {
    pub prior_index: usize,
    pub planned_value: f64,
    pub empirical_mean: f64,
    pub standard_error: f64,
    /// |planned − empirical|.
    pub gap: f64,
    /// Geometric bound on the truncated tail of the planned value.
    pub tail_bound: f64,
    pub trials: usize,
    pub horizon: usize,
}

/// Walks a weight sequence and returns the index where the cumulative sum
/// first exceeds `u`; falls back to the last positive-weight index when
/// rounding leaves `u` past the total.
fn pick_index<I: IntoIterator<Item = (usize, f64)>>(u: f64, weights: I) -> Option<usize> {
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if u < acc {
            return Some(i);
        }
    }
    last
}

struct TrialData {
    steps: Vec<StepRecord>,
    states: Vec<usize>,
    env: f64,
    info: f64,
}

fn run_trial(
    model: &PerceptionMdp,
    policy: &PerceptionActionPolicy,
    sets: &BeliefSets,
    stage_info: &[f64],
    initial_prior: usize,
    initial_state: Option<usize>,
    horizon: usize,
    rng: &mut ChaCha8Rng,
    keep_steps: bool,
) -> Result<TrialData> {
    let prior = sets
        .priors()
        .get(initial_prior)
        .ok_or(Error::IndexOutOfRange {
            what: "prior set",
            index: initial_prior,
            len: sets.num_priors(),
        })?;
    let mut state = match initial_state {
        Some(s) => {
            if s >= model.num_states {
                return Err(Error::StateOutOfRange {
                    state: s,
                    num_states: model.num_states,
                });
            }
            if prior.probs()[s] <= SUPPORT_TOL {
                return Err(Error::UnreachableInitialState { state: s });
            }
            s
        }
        None => {
            let u = rng.gen::<f64>();
            pick_index(u, prior.probs().iter().copied().enumerate())
                .ok_or(Error::DegenerateObservationWeights { step: 0, total: 0.0 })?
        }
    };

    let mut prior_idx = initial_prior;
    let mut steps = Vec::with_capacity(if keep_steps { horizon } else { 0 });
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(state);
    let mut env = 0.0;
    let mut info = 0.0;
    let mut discount = 1.0;

    for t in 0..horizon {
        let row = policy.observation_row(prior_idx, state, sets)?;
        let total: f64 = row.iter().map(|&(_, w)| w).sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::DegenerateObservationWeights { step: t, total });
        }
        let u = rng.gen::<f64>() * total;
        let m = pick_index(u, row.iter().copied())
            .ok_or(Error::DegenerateObservationWeights { step: t, total })?;
        let action = policy.action_of(m);
        let cost = model.cost[state][action];
        let step_info = stage_info[prior_idx];
        env += discount * cost;
        info += discount * step_info;
        if keep_steps {
            steps.push(StepRecord {
                time: t,
                state,
                prior: prior_idx,
                observation: m,
                posterior: m,
                action,
                cost,
                information: step_info,
            });
        }
        let u = rng.gen::<f64>();
        state = pick_index(u, model.transition[action][state].iter().copied().enumerate())
            .ok_or(Error::DegenerateObservationWeights { step: t, total: 0.0 })?;
        prior_idx = sets.prior_index(m, action);
        states.push(state);
        discount *= model.gamma;
    }

    Ok(TrialData {
        steps,
        states,
        env,
        info,
    })
}

/// Expected stage information at every prior, used to score visited priors
/// without re-deriving divergences inside the hot loop.
fn stage_information_table(policy: &PerceptionActionPolicy, sets: &BeliefSets) -> Result<Vec<f64>> {
    (0..sets.num_priors())
        .into_par_iter()
        .map(|i| policy.information(i, sets))
        .collect()
}

/// Simulates one trajectory of `horizon` steps from `initial_prior`,
/// deterministic in `(seed, stream)`. A `None` initial state is drawn from
/// the prior; a given one must lie in its support.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    model: &PerceptionMdp,
    policy: &PerceptionActionPolicy,
    sets: &BeliefSets,
    initial_prior: usize,
    initial_state: Option<usize>,
    horizon: usize,
    seed: u64,
    stream: u64,
) -> Result<RolloutTrace> {
    let stage_info = stage_information_table(policy, sets)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let trial = run_trial(
        model,
        policy,
        sets,
        &stage_info,
        initial_prior,
        initial_state,
        horizon,
        &mut rng,
        true,
    )?;
    Ok(RolloutTrace {
        final_state: *trial.states.last().expect("at least the initial state"),
        steps: trial.steps,
        horizon,
        seed,
        stream,
        discounted_cost: trial.env,
        discounted_information: trial.info,
    })
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs `trials` independent rollouts (trial index = RNG stream) and
/// aggregates them into a residence histogram and discounted-cost summary.
/// Aggregation is sequential in trial order, so results do not depend on
/// scheduling.
pub fn batch_rollouts(
    model: &PerceptionMdp,
    policy: &PerceptionActionPolicy,
    sets: &BeliefSets,
    config: &BatchConfig,
) -> Result<BatchOutcome> {
    if config.trials == 0 {
        return Err(Error::InvalidConfig("batch needs at least one trial".into()));
    }
    let stage_info = stage_information_table(policy, sets)?;
    let trials: Vec<TrialData> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(trial as u64);
            run_trial(
                model,
                policy,
                sets,
                &stage_info,
                config.initial_prior,
                config.initial_state,
                config.horizon,
                &mut rng,
                config.keep_traces,
            )
        })
        .collect::<Result<_>>()?;

    let mut counts = vec![vec![0u64; model.num_states]; config.horizon + 1];
    for trial in &trials {
        for (t, &s) in trial.states.iter().enumerate() {
            counts[t][s] += 1;
        }
    }
    let histogram = ResidenceHistogram {
        counts,
        trials: config.trials,
    };
    histogram.validate()?;

    let env: Vec<f64> = trials.iter().map(|t| t.env).collect();
    let info: Vec<f64> = trials.iter().map(|t| t.info).collect();
    let total: Vec<f64> = trials
        .iter()
        .map(|t| t.env + model.beta * t.info)
        .collect();
    let (env_mean, env_se) = mean_and_se(&env);
    let (info_mean, info_se) = mean_and_se(&info);
    let (total_mean, total_se) = mean_and_se(&total);
    let costs = CostSummary {
        trials: config.trials,
        horizon: config.horizon,
        gamma: model.gamma,
        beta: model.beta,
        env_mean,
        env_se,
        info_mean,
        info_se,
        total_mean,
        total_se,
        tail_bound: model.gamma.powi(config.horizon as i32) * config.value_sup,
    };

    let traces = if config.keep_traces {
        trials
            .into_iter()
            .enumerate()
            .map(|(i, t)| RolloutTrace {
                final_state: *t.states.last().expect("nonempty"),
                steps: t.steps,
                horizon: config.horizon,
                seed: config.seed,
                stream: i as u64,
                discounted_cost: t.env,
                discounted_information: t.info,
            })
            .collect()
    } else {
        Vec::new()
    };

    Ok(BatchOutcome {
        histogram,
        costs,
        traces,
    })
}

/// Compares the planned value at a prior with the mean discounted total cost
/// (environmental plus beta-weighted information) of executing the policy
/// from it, truncated at `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_vs_planned(
    model: &PerceptionMdp,
    policy: &PerceptionActionPolicy,
    sets: &BeliefSets,
    prior_values: &[f64],
    prior_index: usize,
    trials: usize,
    horizon: usize,
    seed: u64,
) -> Result<PlanExecutionComparison> {
    let planned = *prior_values.get(prior_index).ok_or(Error::IndexOutOfRange {
        what: "prior values",
        index: prior_index,
        len: prior_values.len(),
    })?;
    let value_sup = prior_values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let config = BatchConfig {
        initial_prior: prior_index,
        initial_state: None,
        horizon,
        trials,
        seed,
        value_sup,
        keep_traces: false,
    };
    let outcome = batch_rollouts(model, policy, sets, &config)?;
    Ok(PlanExecutionComparison {
        prior_index,
        planned_value: planned,
        empirical_mean: outcome.costs.total_mean,
        standard_error: outcome.costs.total_se,
        gap: (planned - outcome.costs.total_mean).abs(),
        tail_bound: outcome.costs.tail_bound,
        trials,
        horizon,
    })
}

/// Replays a trace against the model, policy, and belief sets, confirming
/// the agent stayed inside the sets: every step's action, cost, and
/// information match the tables; consecutive priors follow the index map;
/// transitions have positive probability; and the Bayes update of each
/// step's prior under its observed kernel column lands back on the recorded
/// posterior. Returns the largest distance between a Bayes update and its
/// matched posterior (the drift, which invariance keeps at rounding scale).
pub fn verify_trace(
    trace: &RolloutTrace,
    model: &PerceptionMdp,
    policy: &PerceptionActionPolicy,
    sets: &BeliefSets,
) -> Result<f64> {
    if trace.steps.len() != trace.horizon {
        return Err(Error::TraceInconsistent(format!(
            "{} steps recorded for horizon {}",
            trace.steps.len(),
            trace.horizon
        )));
    }
    let mut kernels: HashMap<usize, Vec<Vec<f64>>> = HashMap::new();
    let mut drift = 0.0f64;
    for (k, step) in trace.steps.iter().enumerate() {
        if step.time != k {
            return Err(Error::TraceInconsistent(format!(
                "step {k} records time {}",
                step.time
            )));
        }
        if step.observation != step.posterior {
            return Err(Error::TraceInconsistent(format!(
                "step {k}: observation {} differs from posterior {}",
                step.observation, step.posterior
            )));
        }
        if step.action != policy.action_of(step.posterior) {
            return Err(Error::TraceInconsistent(format!(
                "step {k}: action {} is not the stored action for posterior {}",
                step.action, step.posterior
            )));
        }
        if step.cost != model.cost[step.state][step.action] {
            return Err(Error::TraceInconsistent(format!(
                "step {k}: cost {} differs from the stage cost",
                step.cost
            )));
        }
        let expected_info = policy.information(step.prior, sets)?;
        if (step.information - expected_info).abs() > 1e-12 {
            return Err(Error::TraceInconsistent(format!(
                "step {k}: information {} differs from {expected_info}",
                step.information
            )));
        }
        let next_state = trace
            .steps
            .get(k + 1)
            .map(|s| s.state)
            .unwrap_or(trace.final_state);
        if model.transition[step.action][step.state][next_state] <= 0.0 {
            return Err(Error::TraceInconsistent(format!(
                "step {k}: transition {} -> {next_state} has zero probability",
                step.state
            )));
        }
        if let Some(next) = trace.steps.get(k + 1) {
            let mapped = sets.prior_index(step.posterior, step.action);
            if next.prior != mapped {
                return Err(Error::TraceInconsistent(format!(
                    "step {k}: next prior {} is not the mapped index {mapped}",
                    next.prior
                )));
            }
        }
        // Bayes consistency: conditioning the prior on the observed column
        // must reproduce the recorded posterior, exactly up to rounding.
        if !kernels.contains_key(&step.prior) {
            kernels.insert(step.prior, policy.kernel(step.prior, sets)?);
        }
        let kernel = &kernels[&step.prior];
        let prior_belief = &sets.priors()[step.prior];
        let column: Vec<f64> = kernel.iter().map(|row| row[step.posterior].min(1.0)).collect();
        let (updated, _) = bayes_update(prior_belief, &column)?;
        let (nearest, distance) = project_nearest(&updated, sets.posteriors(), SUPPORT_TOL)?;
        if nearest != step.posterior {
            return Err(Error::TraceInconsistent(format!(
                "step {k}: Bayes update projects to posterior {nearest}, recorded {}",
                step.posterior
            )));
        }
        drift = drift.max(distance);
        if distance > 1e-9 {
            return Err(Error::TraceInconsistent(format!(
                "step {k}: Bayes update drifted {distance} from posterior {}",
                step.posterior
            )));
        }
    }
    Ok(drift)
}
