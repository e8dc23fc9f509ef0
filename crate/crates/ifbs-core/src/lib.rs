//! Joint synthesis of perception strategies and action policies for finite
//! MDPs where acquiring state information is priced at a fixed cost per nat.
//!
//! The planner works on belief space. A solution is evaluated over two finite
//! belief collections: a designer-chosen posterior set (which must contain all
//! simplex vertices) and the prior set it induces through the one-step
//! predictors. Value iteration alternates two backups until the Bellman
//! residual contracts below tolerance:
//!
//! * posterior backup: `Vhat(m) = min_a [ c_a . bhat_m + gamma * V(prior(m, a)) ]`
//! * prior backup: a small linear program that mixes admissible posteriors,
//!   paying `beta * KL(bhat_m || b)` plus the continuation value for each.
//!
//! The optimal perception strategy falls out of the prior LPs: the mixing
//! weights are exactly the marginal observation probabilities, and the
//! posterior-conditional kernel is recovered in closed form. [`simulator`]
//! executes the resulting closed loop on the underlying MDP; [`diagnostics`]
//! provides independent oracles and error-bound estimates.

pub mod belief;
pub mod diagnostics;
pub mod error;
pub mod export;
pub mod lp;
pub mod model;
pub mod policy;
pub mod simulator;
pub mod solver;

pub use belief::{Belief, BeliefSets};
pub use error::{Error, Result};
pub use lp::{LpInstance, LpSolution, LpStatus};
pub use model::{GridworldConfig, PerceptionMdp};
pub use policy::PerceptionActionPolicy;
pub use simulator::{CostSummary, ResidenceHistogram, RolloutTrace};
pub use solver::{SolveOptions, SolveResult};

/// Entries at or below this threshold are treated as zero when computing
/// belief supports.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Max-norm radius used when deduplicating beliefs; the first occurrence is
/// kept.
pub const DEDUP_TOL: f64 = 1e-10;

/// Validation tolerance for probability vectors (row sums, belief sums).
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Feasibility/optimality tolerance for the prior-backup linear programs.
pub const LP_TOL: f64 = 1e-9;
