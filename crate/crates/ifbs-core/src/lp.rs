//! The prior-backup linear program.
//!
//! For a prior `b` with support `S`, the backup chooses weights `alpha` over
//! the admissible posteriors (those supported inside `S`), minimizing
//! `sum_m F_m alpha_m` with `F_m = beta * KL(bhat_m || b) + Vhat(bhat_m)`,
//! subject to `sum_m alpha_m * bhat_m = b` on `S`. The normalization
//! `sum alpha = 1` is implied because each admissible column sums to 1 over
//! `S` and the right-hand side sums to 1.
//!
//! Instances are tiny but solved millions of times, so the solver is a dense
//! revised simplex warm-started from the always-feasible vertex decomposition
//! `alpha[vertex(s)] = b(s)`: the restricted vertex columns form an identity
//! basis, so no phase-1 is needed. It enters by Dantzig's most-negative rule,
//! leaves by the lexicographic ratio test (whose unique minimizer rules out
//! cycling), prices against the original columns, and refactorizes the basis
//! inverse periodically so floating-point error cannot compound. [`WarmLp`]
//! keeps the factored state of one instance alive across cost changes so
//! value-iteration sweeps re-enter at the previous optimal basis.

use serde::{Deserialize, Serialize};

use crate::belief::{kl_divergence, Belief};
use crate::error::{Error, Result};

/// Termination status of [`solve_lp`]. `Infeasible` means no identity warm
/// start could be formed, which signals a posterior set violating the
/// all-vertices assumption upstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Reusable support/geometry part of an instance: everything except the cost
/// vector, which changes every sweep as the posterior values move.
#[derive(Debug, Clone)]
pub struct LpSkeleton {
    /// Support of the prior, ascending state indices.
    pub support: Vec<usize>,
    /// Admissible posterior indices (support contained in the prior's).
    pub admissible: Vec<usize>,
    /// `columns[j][i]` = posterior `admissible[j]` restricted to `support[i]`.
    pub columns: Vec<Vec<f64>>,
    /// Prior restricted to its support; strictly positive.
    pub rhs: Vec<f64>,
    /// `KL(bhat_m || b)` per admissible column.
    pub kl: Vec<f64>,
    /// Total number of posteriors `M` (for sizing dense alpha vectors).
    pub num_posteriors: usize,
}

/// A fully assembled prior-backup LP.
#[derive(Debug, Clone, Serialize)]
pub struct LpInstance {
    /// Index of the prior in the prior set, when it came from one.
    pub prior_index: Option<usize>,
    pub support: Vec<usize>,
    pub admissible: Vec<usize>,
    /// `F_m = beta * KL(bhat_m || b) + Vhat(bhat_m)` per admissible column.
    pub costs: Vec<f64>,
    /// Restricted posterior columns, matching `admissible`.
    pub columns: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub num_posteriors: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LpSolution {
    /// Dense weights over the full posterior set; zero off the basis.
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub status: LpStatus,
    pub pivots: usize,
}

/// Indices of posteriors whose support is contained in the support of `b`.
pub fn admissible_posteriors(b: &Belief, posteriors: &[Belief], tol: f64) -> Vec<usize> {
    posteriors
        .iter()
        .enumerate()
        .filter(|(_, cand)| {
            cand.probs()
                .iter()
                .zip(b.probs())
                .all(|(&pm, &pb)| pm <= tol || pb > tol)
        })
        .map(|(m, _)| m)
        .collect()
}

impl LpSkeleton {
    pub fn build(b: &Belief, posteriors: &[Belief], tol: f64) -> Result<Self> {
        let support = b.support(tol);
        let admissible = admissible_posteriors(b, posteriors, tol);
        if admissible.is_empty() {
            return Err(Error::EmptyAdmissibleSet { support });
        }
        let rhs: Vec<f64> = support.iter().map(|&s| b.probs()[s]).collect();
        let mut columns = Vec::with_capacity(admissible.len());
        let mut kl = Vec::with_capacity(admissible.len());
        for &m in &admissible {
            columns.push(support.iter().map(|&s| posteriors[m].probs()[s]).collect());
            // admissibility makes the divergence finite by construction
            kl.push(kl_divergence(&posteriors[m], b)?);
        }
        Ok(Self {
            support,
            admissible,
            columns,
            rhs,
            kl,
            num_posteriors: posteriors.len(),
        })
    }

    /// Cost vector for the current posterior values.
    pub fn costs(&self, v_hat: &[f64], beta: f64) -> Vec<f64> {
        self.admissible
            .iter()
            .zip(&self.kl)
            .map(|(&m, &d)| beta * d + v_hat[m])
            .collect()
    }

    /// Materializes a standalone instance (for one-off solves and debugging
    /// dumps; the solver's inner loop works on the skeleton directly).
    pub fn instance(&self, v_hat: &[f64], beta: f64, prior_index: Option<usize>) -> LpInstance {
        LpInstance {
            prior_index,
            support: self.support.clone(),
            admissible: self.admissible.clone(),
            costs: self.costs(v_hat, beta),
            columns: self.columns.clone(),
            rhs: self.rhs.clone(),
            num_posteriors: self.num_posteriors,
        }
    }

    /// Solves with the given cost vector, expanding the solution to a dense
    /// alpha over all posteriors.
    pub fn solve_with_costs(&self, costs: &[f64]) -> LpSolution {
        let (status, x, pivots) = simplex(&self.columns, &self.rhs, costs);
        let mut alpha = vec![0.0; self.num_posteriors];
        let mut objective = 0.0;
        if status == LpStatus::Optimal {
            for (j, &weight) in x.iter().enumerate() {
                if weight != 0.0 {
                    alpha[self.admissible[j]] = weight;
                    objective += costs[j] * weight;
                }
            }
        }
        LpSolution {
            alpha,
            objective,
            status,
            pivots,
        }
    }
}

/// Builds the prior-backup LP for `b` against `posteriors` with posterior
/// values `v_hat` and information price `beta`.
pub fn assemble_lp(
    b: &Belief,
    posteriors: &[Belief],
    v_hat: &[f64],
    beta: f64,
    tol: f64,
    prior_index: Option<usize>,
) -> Result<LpInstance> {
    if v_hat.len() != posteriors.len() {
        return Err(Error::LengthMismatch {
            left: v_hat.len(),
            right: posteriors.len(),
        });
    }
    Ok(LpSkeleton::build(b, posteriors, tol)?.instance(v_hat, beta, prior_index))
}

/// Solves an assembled instance. Deterministic: exact tie-breaks favor the
/// lowest index, warm start from the vertex-decomposition identity basis.
pub fn solve_lp(instance: &LpInstance) -> LpSolution {
    let (status, x, pivots) = simplex(&instance.columns, &instance.rhs, &instance.costs);
    let mut alpha = vec![0.0; instance.num_posteriors];
    let mut objective = 0.0;
    if status == LpStatus::Optimal {
        for (j, &weight) in x.iter().enumerate() {
            if weight != 0.0 {
                alpha[instance.admissible[j]] = weight;
                objective += instance.costs[j] * weight;
            }
        }
    }
    LpSolution {
        alpha,
        objective,
        status,
        pivots,
    }
}

/// Smallest tableau entry eligible as a pivot. Entries below this are treated
/// as exact zeros: genuine column entries are probability weights well above
/// it, so anything smaller is roundoff from earlier pivots, and pivoting on
/// it would produce a numerically singular basis.
const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 10_000;

/// Refactorization cadence: the basis inverse is rebuilt from the original
/// columns after this many pivots, so floating-point error cannot compound
/// across a long pivot sequence (or across warm-started sweeps).
const REFACTOR_PIVOTS: usize = 64;

/// Revised-simplex state: the explicit basis inverse, the basic variable
/// values `x = B^-1 rhs`, and the column index basic in each row. Reduced
/// costs and entering directions are always formed against the original
/// columns, so their accuracy is limited only by `binv`, which is refreshed
/// on a fixed pivot cadence.
struct Factor {
    binv: Vec<Vec<f64>>,
    x: Vec<f64>,
    basis: Vec<usize>,
    pivots_since_refactor: usize,
}

impl Factor {
    /// Identity warm start from the restricted vertex columns: every support
    /// row has a unit column, so the start is feasible with no phase-1.
    /// Returns None if some row lacks one (a posterior set violating the
    /// all-vertices assumption upstream).
    fn identity(columns: &[Vec<f64>], rhs: &[f64]) -> Option<Self> {
        let rows = rhs.len();
        let mut basis = vec![usize::MAX; rows];
        for (j, col) in columns.iter().enumerate() {
            if let Some(i) = unit_row(col) {
                if basis[i] == usize::MAX {
                    basis[i] = j;
                }
            }
        }
        if basis.iter().any(|&j| j == usize::MAX) {
            return None;
        }

        // grid and blur posterior sets store vertices exactly, so the basis
        // matrix is the identity; refactorize only if a caller passed
        // inexact vertex columns
        let exact = basis.iter().enumerate().all(|(i, &j)| {
            columns[j]
                .iter()
                .enumerate()
                .all(|(r, &v)| if r == i { v == 1.0 } else { v == 0.0 })
        });
        if exact {
            let mut binv = vec![vec![0.0; rows]; rows];
            for (i, row) in binv.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            Some(Self {
                binv,
                x: rhs.to_vec(),
                basis,
                pivots_since_refactor: 0,
            })
        } else {
            Self::refactorized(columns, rhs, basis)
        }
    }

    /// Rebuilds the inverse and basic values for `basis` from the original
    /// columns. None if the basis matrix is numerically singular.
    fn refactorized(columns: &[Vec<f64>], rhs: &[f64], basis: Vec<usize>) -> Option<Self> {
        let rows = rhs.len();
        // Gauss-Jordan on [B | I] with partial pivoting
        let mut b: Vec<Vec<f64>> = (0..rows)
            .map(|i| basis.iter().map(|&j| columns[j][i]).collect())
            .collect();
        let mut binv = vec![vec![0.0; rows]; rows];
        for (i, row) in binv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for k in 0..rows {
            let piv = (k..rows)
                .max_by(|&p, &q| b[p][k].abs().partial_cmp(&b[q][k].abs()).unwrap())
                .unwrap();
            if b[piv][k].abs() < 1e-12 {
                return None;
            }
            b.swap(k, piv);
            binv.swap(k, piv);
            let scale = b[k][k];
            for v in b[k].iter_mut() {
                *v /= scale;
            }
            for v in binv[k].iter_mut() {
                *v /= scale;
            }
            let (bk, binvk) = (b[k].clone(), binv[k].clone());
            for i in 0..rows {
                if i == k {
                    continue;
                }
                let f = b[i][k];
                if f == 0.0 {
                    continue;
                }
                for (v, &p) in b[i].iter_mut().zip(&bk) {
                    *v -= f * p;
                }
                for (v, &p) in binv[i].iter_mut().zip(&binvk) {
                    *v -= f * p;
                }
            }
        }
        let x = (0..rows)
            .map(|i| binv[i].iter().zip(rhs).map(|(&w, &r)| w * r).sum::<f64>().max(0.0))
            .collect();
        Some(Self {
            binv,
            x,
            basis,
            pivots_since_refactor: 0,
        })
    }
}

/// Pivots `state` to optimality for `costs`. On success the basic values are
/// recomputed from the original columns, shedding accumulated roundoff.
fn run_pivots(
    state: &mut Factor,
    columns: &[Vec<f64>],
    rhs: &[f64],
    costs: &[f64],
) -> (LpStatus, usize) {
    let rows = rhs.len();
    let cols = columns.len();

    let cost_scale = 1.0 + costs.iter().fold(0.0f64, |m, &c| m.max(c.abs()));
    let rc_tol = 1e-10 * cost_scale;

    let mut in_basis = vec![false; cols];
    for &j in &state.basis {
        in_basis[j] = true;
    }

    let mut pivots = 0;
    let mut refactor_retry = false;
    loop {
        if state.pivots_since_refactor >= REFACTOR_PIVOTS {
            match Factor::refactorized(columns, rhs, std::mem::take(&mut state.basis)) {
                Some(fresh) => *state = fresh,
                None => return (LpStatus::IterationLimit, pivots),
            }
        }

        // simplex multipliers y = c_B' B^-1, then reduced costs against the
        // original columns: rc_j = c_j - y . A_j
        let mut y = vec![0.0; rows];
        for (i, &j) in state.basis.iter().enumerate() {
            let cb = costs[j];
            if cb != 0.0 {
                for (yk, &w) in y.iter_mut().zip(&state.binv[i]) {
                    *yk += cb * w;
                }
            }
        }

        // entering rule: most-negative reduced cost, lowest index on ties
        let mut entering = None;
        let mut best = -rc_tol;
        for (j, col) in columns.iter().enumerate() {
            if in_basis[j] {
                continue;
            }
            let dot: f64 = y.iter().zip(col).map(|(&yi, &ai)| yi * ai).sum();
            let rc = costs[j] - dot;
            if rc < best {
                best = rc;
                entering = Some(j);
            }
        }
        let Some(e) = entering else {
            break;
        };

        // entering direction d = B^-1 A_e
        let d: Vec<f64> = state
            .binv
            .iter()
            .map(|row| row.iter().zip(&columns[e]).map(|(&w, &ai)| w * ai).sum())
            .collect();

        // lexicographic ratio test: minimize (x_i, binv_i) / d_i over rows
        // with d_i > 0, comparing lexicographically. These instances are
        // heavily degenerate (most basic values sit at exactly zero), and a
        // plain ratio test stalls in long tie chains; the lex minimum is
        // unique because the rows of the basis inverse are independent, so
        // ties cannot arise and the pivot sequence cannot cycle.
        let mut leave: Option<usize> = None;
        for (i, &di) in d.iter().enumerate() {
            if di <= PIVOT_TOL {
                continue;
            }
            leave = Some(match leave {
                None => i,
                Some(li) => {
                    let (a, b) = (state.x[i] / di, state.x[li] / d[li]);
                    let less = if a != b {
                        a < b
                    } else {
                        let (ri, rl) = (&state.binv[i], &state.binv[li]);
                        let mut verdict = false;
                        for k in 0..rows {
                            let (u, v) = (ri[k] / di, rl[k] / d[li]);
                            if u != v {
                                verdict = u < v;
                                break;
                            }
                        }
                        verdict
                    };
                    if less {
                        i
                    } else {
                        li
                    }
                }
            });
        }
        let Some(l) = leave else {
            // the LP is bounded, so a missing leaving row means the direction
            // is numerical noise; refactorize once and retry, then give up
            if refactor_retry {
                return (LpStatus::IterationLimit, pivots);
            }
            refactor_retry = true;
            match Factor::refactorized(columns, rhs, std::mem::take(&mut state.basis)) {
                Some(fresh) => *state = fresh,
                None => return (LpStatus::IterationLimit, pivots),
            }
            continue;
        };

        // elementary row update of the inverse and the basic values
        let piv = d[l];
        for v in state.binv[l].iter_mut() {
            *v /= piv;
        }
        state.x[l] /= piv;
        let (pivot_row, pivot_x) = (state.binv[l].clone(), state.x[l]);
        for i in 0..rows {
            if i == l {
                continue;
            }
            let f = d[i];
            if f == 0.0 {
                continue;
            }
            for (v, &p) in state.binv[i].iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            state.x[i] -= f * pivot_x;
            if state.x[i] < 0.0 {
                state.x[i] = 0.0; // clamp roundoff; exact value is >= 0
            }
        }
        in_basis[state.basis[l]] = false;
        in_basis[e] = true;
        state.basis[l] = e;
        state.pivots_since_refactor += 1;
        pivots += 1;
        if pivots >= MAX_PIVOTS {
            return (LpStatus::IterationLimit, pivots);
        }
    }

    if pivots > 0 {
        match solve_basis(columns, rhs, &state.basis) {
            Some(clean) => state.x = clean,
            None => return (LpStatus::IterationLimit, pivots),
        }
    }
    (LpStatus::Optimal, pivots)
}

/// One-shot revised simplex for `min c'x : A x = rhs, x >= 0` where `A` is
/// given by columns. Requires a unit column for every row (the restricted
/// vertex posteriors provide them); returns the basic solution over columns.
fn simplex(columns: &[Vec<f64>], rhs: &[f64], costs: &[f64]) -> (LpStatus, Vec<f64>, usize) {
    let cols = columns.len();
    let Some(mut state) = Factor::identity(columns, rhs) else {
        return (LpStatus::Infeasible, vec![0.0; cols], 0);
    };
    let (status, pivots) = run_pivots(&mut state, columns, rhs, costs);
    let mut solution = vec![0.0; cols];
    if status == LpStatus::Optimal {
        for (i, &j) in state.basis.iter().enumerate() {
            solution[j] = state.x[i];
        }
    }
    (status, solution, pivots)
}

/// Persistent simplex state for one skeleton, reused across cost changes.
/// Value iteration re-solves every prior's LP each sweep with slowly moving
/// costs, so re-entering at the previous optimal basis usually terminates
/// within a pivot or two. The basis inverse is refactorized on a fixed pivot
/// cadence, so roundoff cannot accumulate across sweeps.
pub struct WarmLp {
    state: Factor,
}

impl WarmLp {
    /// Identity-basis state for a skeleton. Returns None only if some support
    /// row has no vertex column, which [`LpSkeleton::build`] rules out.
    pub fn new(skeleton: &LpSkeleton) -> Option<Self> {
        let state = Factor::identity(&skeleton.columns, &skeleton.rhs)?;
        Some(Self { state })
    }

    /// Re-solves the skeleton under a new cost vector, continuing from the
    /// previous optimal basis.
    pub fn solve(&mut self, skeleton: &LpSkeleton, costs: &[f64]) -> LpSolution {
        let (mut status, mut pivots) =
            run_pivots(&mut self.state, &skeleton.columns, &skeleton.rhs, costs);
        if status != LpStatus::Optimal {
            // retry once from a fresh identity basis before giving up
            if let Some(fresh) = Factor::identity(&skeleton.columns, &skeleton.rhs) {
                self.state = fresh;
                let (again, more) =
                    run_pivots(&mut self.state, &skeleton.columns, &skeleton.rhs, costs);
                status = again;
                pivots += more;
            }
        }

        let mut alpha = vec![0.0; skeleton.num_posteriors];
        let mut objective = 0.0;
        if status == LpStatus::Optimal {
            for (i, &j) in self.state.basis.iter().enumerate() {
                let weight = self.state.x[i];
                if weight != 0.0 {
                    alpha[skeleton.admissible[j]] = weight;
                    objective += costs[j] * weight;
                }
            }
        }
        LpSolution {
            alpha,
            objective,
            status,
            pivots,
        }
    }
}

/// Solves `B y = rhs` by Gaussian elimination with partial pivoting, where
/// `B` has the basis columns in order. Returns None (caller keeps the tableau
/// values) if the basis matrix is numerically singular or the solution has a
/// materially negative entry, which a correct optimal basis cannot.
fn solve_basis(columns: &[Vec<f64>], rhs: &[f64], basis: &[usize]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| basis.iter().map(|&j| columns[j][i]).collect())
        .collect();
    let mut y = rhs.to_vec();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&p, &q| a[p][k].abs().partial_cmp(&a[q][k].abs()).unwrap())
            .unwrap();
        if a[piv][k].abs() < 1e-12 {
            return None;
        }
        a.swap(k, piv);
        y.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f == 0.0 {
                continue;
            }
            for c in k..n {
                a[i][c] -= f * a[k][c];
            }
            y[i] -= f * y[k];
        }
    }
    let mut sol = vec![0.0; n];
    for k in (0..n).rev() {
        let mut v = y[k];
        for c in k + 1..n {
            v -= a[k][c] * sol[c];
        }
        sol[k] = v / a[k][k];
    }
    if sol.iter().any(|&v| !v.is_finite() || v < -1e-8) {
        return None;
    }
    for v in sol.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Some(sol)
}

fn unit_row(col: &[f64]) -> Option<usize> {
    let mut hit = None;
    for (i, &v) in col.iter().enumerate() {
        if (v - 1.0).abs() <= 1e-9 {
            if hit.is_some() {
                return None;
            }
            hit = Some(i);
        } else if v.abs() > 1e-9 {
            return None;
        }
    }
    hit
}

/// Outcome of checking the vertex-decomposition feasibility certificate
/// `alpha[vertex(s)] = b(s)` for a prior `b`.
#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityCertificate {
    pub feasible: bool,
    /// Max-norm residual of the certificate on the support of `b`.
    pub residual: f64,
    /// Sparse certificate weights (posterior index, weight).
    pub alpha: Vec<(usize, f64)>,
    /// States whose vertex is absent from the posterior set.
    pub missing_vertices: Vec<usize>,
}

/// Constructs the explicit vertex decomposition of `b` over `posteriors` and
/// measures how well it satisfies the LP constraints.
pub fn verify_feasibility(b: &Belief, posteriors: &[Belief], tol: f64) -> FeasibilityCertificate {
    let n = b.len();
    let mut alpha = Vec::new();
    let mut missing = Vec::new();
    for s in b.support(tol) {
        let vertex = Belief::vertex(n, s);
        match posteriors
            .iter()
            .position(|p| p.max_norm_distance(&vertex) <= crate::DEDUP_TOL)
        {
            Some(idx) => alpha.push((idx, b.probs()[s])),
            None => missing.push(s),
        }
    }
    if !missing.is_empty() {
        return FeasibilityCertificate {
            feasible: false,
            residual: f64::INFINITY,
            alpha,
            missing_vertices: missing,
        };
    }
    let mut residual = 0.0f64;
    for &s in &b.support(tol) {
        let mixed: f64 = alpha
            .iter()
            .map(|&(m, w)| w * posteriors[m].probs()[s])
            .sum();
        residual = residual.max((mixed - b.probs()[s]).abs());
    }
    FeasibilityCertificate {
        feasible: true,
        residual,
        alpha,
        missing_vertices: missing,
    }
}
