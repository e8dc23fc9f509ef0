//! The four commands: validate, solve, simulate, and diagnose.
//!
//! Solve and simulate write artifact directories described by a
//! [`RunManifest`]; diagnose wraps the executable checks from the core
//! diagnostics module. Every command exits 0 only when its contract holds:
//! usage and decoding problems exit 2, semantic failures (invalid models,
//! failed checks, non-convergence) exit 1.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Subcommand};
use serde::Serialize;

use ifbs_core::diagnostics::{
    approximation_bound, beta_zero_gap, check_entropy_perturbation, refinement_monotonicity,
};
use ifbs_core::export;
use ifbs_core::lp::assemble_lp;
use ifbs_core::simulator::{batch_rollouts, BatchConfig};
use ifbs_core::solver::{value_iteration, SolveOptions};
use ifbs_core::{
    BeliefSets, GridworldConfig, PerceptionActionPolicy, PerceptionMdp, SolveResult, SUPPORT_TOL,
};

use crate::artifacts::{ensure_dir, read_json, write_json, write_text, RunManifest};
use crate::source::{load_model_file, resolve, Builtin, ModelSource};
use crate::CliError;

/// Largest tolerated gap between the free-information solution and the
/// classical MDP oracle.
const ORACLE_TOL: f64 = 1e-6;

/// Exactly one model source.
#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
pub struct SourcePick {
    /// Model file: an explicit MDP or a gridworld config (JSON).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Built-in benchmark model.
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
}

impl SourcePick {
    fn resolve(&self, gamma: Option<f64>, beta: Option<f64>) -> Result<ModelSource, CliError> {
        resolve(self.model.as_deref(), self.builtin, gamma, beta)
    }
}

/// Builds a dedicated worker pool; `jobs = 0` uses one worker per core.
fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build a {jobs}-worker pool: {e}")))
}

/// Spacing used for the belief sets: required (with its default) for
/// simplex-grid models, rejected for gridworlds, which always use the local
/// blur scheme.
fn effective_spacing(source: &ModelSource, spacing: Option<f64>) -> Result<Option<f64>, CliError> {
    match (&source.grid, spacing) {
        (Some(_), Some(_)) => Err(CliError::Usage(
            "gridworld models use the local blur scheme; --spacing does not apply".into(),
        )),
        (Some(_), None) => Ok(None),
        (None, given) => Ok(Some(given.unwrap_or(0.2))),
    }
}

// ---------------------------------------------------------------------------
// validate

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Model file: an explicit MDP or a gridworld config (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Directory for report.json (report prints to stdout regardless).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ValidateReport {
    valid: bool,
    num_states: usize,
    num_actions: usize,
    violations: Vec<String>,
}

pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let source = load_model_file(&args.model)?;
    let violations: Vec<String> = source
        .model
        .validate()
        .iter()
        .map(ToString::to_string)
        .collect();
    let report = ValidateReport {
        valid: violations.is_empty(),
        num_states: source.model.num_states,
        num_actions: source.model.num_actions,
        violations,
    };
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_json(dir, "report.json", &report)?;
    }
    if report.valid {
        println!(
            "model ok: {} states, {} actions",
            report.num_states, report.num_actions
        );
        Ok(())
    } else {
        for violation in &report.violations {
            println!("violation: {violation}");
        }
        Err(CliError::Check(format!(
            "{} has {} violations",
            args.model.display(),
            report.violations.len()
        )))
    }
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub pick: SourcePick,
    /// Simplex-grid spacing, the reciprocal of a positive integer
    /// (simplex-grid models only; gridworlds use the local blur scheme).
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Override the model's discount factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Override the model's information price (cost per nat).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Sup-norm residual below which value iteration stops.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Output directory.
    #[arg(long, default_value = "ifbs-out")]
    pub out: PathBuf,
    /// Worker cap; 0 means one per available core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Also dump every prior-backup LP at the converged values
    /// (lp_instances.jsonl, one instance per line).
    #[arg(long)]
    pub dump_lp: bool,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    converged: bool,
    iterations: usize,
    final_residual: Option<f64>,
    gap_bound: f64,
    num_posteriors: usize,
    num_priors: usize,
    raw_posterior_count: usize,
    raw_prior_count: usize,
}

pub fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let source = args.pick.resolve(args.gamma, args.beta)?;
    let spacing = effective_spacing(&source, args.spacing)?;
    let pool = thread_pool(args.jobs)?;
    let start = Instant::now();
    let sets = source.build_sets(spacing.unwrap_or(0.2))?;
    let options = SolveOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        init_prior_values: None,
    };
    let result = pool.install(|| value_iteration(&source.model, &sets, &options))?;
    let policy = PerceptionActionPolicy::from_result(&result, &sets)?;
    let elapsed = start.elapsed();

    ensure_dir(&args.out)?;
    let manifest = RunManifest {
        command: "solve".into(),
        model_source: source.origin.clone(),
        belief_scheme: source.scheme().into(),
        spacing,
        gamma: source.model.gamma,
        beta: source.model.beta,
        tol: args.tol,
        max_iter: args.max_iter,
        seed: None,
        trials: None,
        horizon: None,
        jobs: args.jobs,
        out_dir: args.out.display().to_string(),
    };
    write_json(&args.out, "manifest.json", &manifest)?;
    write_json(&args.out, "model.json", &source.model)?;
    if let Some(grid) = &source.grid {
        write_json(&args.out, "gridworld.json", grid)?;
    }
    write_json(&args.out, "sets.json", &sets)?;
    write_json(&args.out, "result.json", &result)?;
    write_json(&args.out, "policy.json", &policy)?;
    write_text(
        &args.out,
        "values_prior.csv",
        &export::values_prior_csv(&result.prior_values),
    )?;
    write_text(
        &args.out,
        "values_posterior.csv",
        &export::values_posterior_csv(&result.posterior_values),
    )?;
    write_text(&args.out, "actions.csv", &export::actions_csv(&result.best_action))?;
    write_text(&args.out, "alpha.csv", &export::alpha_csv(&result.alpha))?;
    let report = SolveReport {
        converged: result.converged,
        iterations: result.iterations,
        final_residual: result.residuals.last().copied(),
        gap_bound: result.gap_bound(),
        num_posteriors: sets.num_posteriors(),
        num_priors: sets.num_priors(),
        raw_posterior_count: sets.raw_posterior_count(),
        raw_prior_count: sets.raw_prior_count(),
    };
    write_json(&args.out, "report.json", &report)?;
    if args.dump_lp {
        let mut lines = String::new();
        for (i, prior) in sets.priors().iter().enumerate() {
            let instance = assemble_lp(
                prior,
                sets.posteriors(),
                &result.posterior_values,
                source.model.beta,
                SUPPORT_TOL,
                Some(i),
            )?;
            lines.push_str(&serde_json::to_string(&instance).map_err(|e| {
                CliError::Check(format!("cannot encode LP instance {i}: {e}"))
            })?);
            lines.push('\n');
        }
        write_text(&args.out, "lp_instances.jsonl", &lines)?;
    }
    println!(
        "solved {}: {} posteriors ({} raw), {} priors ({} raw images), \
         {} sweeps, residual {:.3e}, gap bound {:.3e}, {:.2}s",
        source.origin,
        report.num_posteriors,
        report.raw_posterior_count,
        report.num_priors,
        report.raw_prior_count,
        report.iterations,
        report.final_residual.unwrap_or(f64::NAN),
        report.gap_bound,
        elapsed.as_secs_f64()
    );
    if result.converged {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "no convergence within {} sweeps (outputs written to {})",
            args.max_iter,
            args.out.display()
        )))
    }
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory produced by `ifbs solve`.
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Time slices exported to residence.csv.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 5, 10, 20, 40])]
    pub slices: Vec<usize>,
    /// Initial prior index (default: the start vertex pushed through its
    /// policy action).
    #[arg(long)]
    pub prior: Option<usize>,
    /// True initial state (default: sampled from the initial prior).
    #[arg(long)]
    pub start_state: Option<usize>,
    /// Write every trajectory to traces.jsonl, one JSON object per line.
    #[arg(long)]
    pub dump_traces: bool,
    /// Output directory (default: <result>/simulate).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker cap; 0 means one per available core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let solve_manifest: RunManifest = read_json(&args.result, "manifest.json")?;
    let model: PerceptionMdp = read_json(&args.result, "model.json")?;
    let sets: BeliefSets = read_json(&args.result, "sets.json")?;
    let result: SolveResult = read_json(&args.result, "result.json")?;
    let policy: PerceptionActionPolicy = read_json(&args.result, "policy.json")?;
    if !result.converged {
        return Err(CliError::Check(format!(
            "{} holds a non-converged result; re-run solve first",
            args.result.display()
        )));
    }
    model.ensure_valid()?;
    policy.validate(&sets)?;

    // seed the episode at the gridworld start cell when there is one,
    // state 0 otherwise
    let seed_state = match args.start_state {
        Some(state) => state,
        None if args.result.join("gridworld.json").exists() => {
            let grid: GridworldConfig = read_json(&args.result, "gridworld.json")?;
            grid.state_of(grid.start)
        }
        None => 0,
    };
    let initial_prior = match args.prior {
        Some(prior) => prior,
        None => {
            let vertex = sets.vertex_index(seed_state);
            sets.prior_index(vertex, policy.action_of(vertex))
        }
    };
    let batch = BatchConfig {
        initial_prior,
        initial_state: args.start_state,
        horizon: args.horizon,
        trials: args.trials,
        seed: args.seed,
        value_sup: result.prior_values.iter().fold(0.0, |a, &b| a.max(b)),
        keep_traces: args.dump_traces,
    };
    let pool = thread_pool(args.jobs)?;
    let start = Instant::now();
    let outcome = pool.install(|| batch_rollouts(&model, &policy, &sets, &batch))?;
    let elapsed = start.elapsed();

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.result.join("simulate"));
    ensure_dir(&out)?;
    let manifest = RunManifest {
        command: "simulate".into(),
        model_source: format!("result:{}", args.result.display()),
        belief_scheme: solve_manifest.belief_scheme,
        spacing: solve_manifest.spacing,
        gamma: model.gamma,
        beta: model.beta,
        tol: result.tol,
        max_iter: 0,
        seed: Some(args.seed),
        trials: Some(args.trials),
        horizon: Some(args.horizon),
        jobs: args.jobs,
        out_dir: out.display().to_string(),
    };
    write_json(&out, "manifest.json", &manifest)?;
    write_text(
        &out,
        "residence.csv",
        &export::residence_csv(&outcome.histogram, &args.slices),
    )?;
    write_json(&out, "costs.json", &outcome.costs)?;
    write_text(&out, "costs.csv", &export::costs_csv(&outcome.costs))?;
    if args.dump_traces {
        let mut lines = String::new();
        for trace in &outcome.traces {
            lines.push_str(
                &serde_json::to_string(trace)
                    .map_err(|e| CliError::Check(format!("cannot encode trace: {e}")))?,
            );
            lines.push('\n');
        }
        write_text(&out, "traces.jsonl", &lines)?;
    }
    println!(
        "simulated {} trials x {} steps from prior {}: env {:.4} +- {:.4}, \
         info {:.4} +- {:.4} nats, tail bound {:.3e}, {:.2}s",
        args.trials,
        args.horizon,
        initial_prior,
        outcome.costs.env_mean,
        outcome.costs.env_se,
        outcome.costs.info_mean,
        outcome.costs.info_se,
        outcome.costs.tail_bound,
        elapsed.as_secs_f64()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// diagnose

#[derive(Debug, Subcommand)]
pub enum DiagnoseCommand {
    /// Value tables must not increase anywhere when the posterior grid is
    /// refined (simplex-grid models only).
    Monotonicity(MonotonicityArgs),
    /// Sampled check of the entropy perturbation bound
    /// |H(p) - H(q)| <= eps |ln eps| n at max-norm distance eps <= 1/2.
    EntropyBound(EntropyBoundArgs),
    /// With free information the vertex values must match classical value
    /// iteration on the underlying MDP (simplex-grid models only).
    BetaZeroOracle(BetaZeroArgs),
    /// A-posteriori approximation bound assembled from a solved run.
    Bound(BoundArgs),
}

pub fn diagnose(command: &DiagnoseCommand) -> Result<(), CliError> {
    match command {
        DiagnoseCommand::Monotonicity(args) => monotonicity(args),
        DiagnoseCommand::EntropyBound(args) => entropy_bound(args),
        DiagnoseCommand::BetaZeroOracle(args) => beta_zero_oracle(args),
        DiagnoseCommand::Bound(args) => bound(args),
    }
}

/// Rejects gridworld sources for the grid-refinement checks, whose simplex
/// grids are combinatorial in the number of states.
fn require_simplex_model(source: &ModelSource, check: &str) -> Result<(), CliError> {
    if source.grid.is_some() {
        return Err(CliError::Usage(format!(
            "{check} refines simplex grids and does not apply to gridworld models"
        )));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct MonotonicityArgs {
    #[command(flatten)]
    pub pick: SourcePick,
    /// Nested grid spacings, coarse to fine (each must divide the next).
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.1, 0.05])]
    pub spacings: Vec<f64>,
    /// Override the model's discount factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Override the model's information price (cost per nat).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Directory for report.json and monotonicity.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn monotonicity(args: &MonotonicityArgs) -> Result<(), CliError> {
    let source = args.pick.resolve(args.gamma, args.beta)?;
    require_simplex_model(&source, "monotonicity")?;
    let report = refinement_monotonicity(&source.model, &args.spacings)?;
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_json(dir, "report.json", &report)?;
        write_text(dir, "monotonicity.csv", &export::monotonicity_csv(&report.rows))?;
    }
    println!(
        "monotonicity over spacings {:?}: max regression {:.3e} ({})",
        report.spacings,
        report.max_regression,
        if report.pass { "pass" } else { "FAIL" }
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "refinement increased a value by {:.3e}",
            report.max_regression
        )))
    }
}

#[derive(Debug, Args)]
pub struct EntropyBoundArgs {
    /// Simplex dimensions to sample.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 3, 5, 10])]
    pub states: Vec<usize>,
    /// Belief pairs sampled per dimension.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Directory for report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn entropy_bound(args: &EntropyBoundArgs) -> Result<(), CliError> {
    let mut reports = Vec::new();
    let mut failures = 0usize;
    for (i, &n) in args.states.iter().enumerate() {
        let report = check_entropy_perturbation(n, args.trials, args.seed + i as u64)?;
        println!(
            "entropy bound on {} states: {} pairs, {} failures, max ratio {:.6} ({})",
            n,
            report.trials,
            report.failures,
            report.max_ratio,
            if report.pass { "pass" } else { "FAIL" }
        );
        failures += report.failures;
        reports.push(report);
    }
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_json(dir, "report.json", &reports)?;
    }
    if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "{failures} sampled pairs violated the entropy bound"
        )))
    }
}

#[derive(Debug, Args)]
pub struct BetaZeroArgs {
    #[command(flatten)]
    pub pick: SourcePick,
    /// Simplex-grid spacing for the free-information solve.
    #[arg(long, default_value_t = 0.2)]
    pub spacing: f64,
    /// Override the model's discount factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Directory for report.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BetaZeroReport {
    spacing: f64,
    gap: f64,
    tolerance: f64,
    pass: bool,
}

fn beta_zero_oracle(args: &BetaZeroArgs) -> Result<(), CliError> {
    let source = args.pick.resolve(args.gamma, Some(0.0))?;
    require_simplex_model(&source, "beta-zero-oracle")?;
    let gap = beta_zero_gap(&source.model, args.spacing)?;
    let report = BetaZeroReport {
        spacing: args.spacing,
        gap,
        tolerance: ORACLE_TOL,
        pass: gap <= ORACLE_TOL,
    };
    if let Some(dir) = &args.out {
        ensure_dir(dir)?;
        write_json(dir, "report.json", &report)?;
    }
    println!(
        "beta-zero oracle at spacing {}: gap {:.3e} vs tolerance {:.0e} ({})",
        args.spacing,
        gap,
        ORACLE_TOL,
        if report.pass { "pass" } else { "FAIL" }
    );
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "free-information values disagree with the classical oracle by {gap:.3e}"
        )))
    }
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    /// Directory produced by `ifbs solve`.
    #[arg(long)]
    pub result: PathBuf,
    /// Samples used to estimate the posterior-set covering radius.
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Directory for report.json (default: the result directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn bound(args: &BoundArgs) -> Result<(), CliError> {
    let model: PerceptionMdp = read_json(&args.result, "model.json")?;
    let sets: BeliefSets = read_json(&args.result, "sets.json")?;
    let result: SolveResult = read_json(&args.result, "result.json")?;
    let report = approximation_bound(&model, &sets, &result, args.samples, args.seed)?;
    let dir = args.out.clone().unwrap_or_else(|| args.result.clone());
    ensure_dir(&dir)?;
    write_json(&dir, "bound.json", &report)?;
    println!(
        "approximation bound: density {:.4e}, regularity {:.4e}, per-step {:.4e}, \
         long-run {:.4e} ({} caveats in bound.json)",
        report.eps_hat,
        report.delta_hat,
        report.epsilon,
        report.limsup_bound,
        report.caveats.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
