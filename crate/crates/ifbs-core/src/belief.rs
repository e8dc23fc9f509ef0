//! Beliefs over the hidden state, belief-space operators, and the finite
//! posterior/prior belief sets the solver iterates over.
//!
//! A posterior set is any finite collection of beliefs that contains every
//! simplex vertex. Closing it under the one-step predictors `b' = (T^a)' bhat`
//! yields the (deduplicated) prior set together with the index map
//! `(posterior m, action a) -> prior`, which is all the solver needs: the
//! vertex requirement guarantees every prior admits a feasible mixture of
//! posteriors supported inside its own support.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GridworldConfig, PerceptionMdp};
use crate::{DEDUP_TOL, SIMPLEX_TOL, SUPPORT_TOL};

/// A probability distribution over states: nonnegative entries summing to 1
/// within [`SIMPLEX_TOL`]. Serialized as a plain JSON array.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::BeliefLength {
                expected: 1,
                got: 0,
            });
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::NegativeBeliefEntry { index: i, value: p });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::BeliefSum { sum });
        }
        Ok(Self { probs })
    }

    /// Internal constructor for vectors produced by operations that preserve
    /// the simplex analytically (prediction, Bayes updates, mixing).
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        debug_assert!(
            (probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9 && probs.iter().all(|&p| p >= 0.0),
            "raw belief violates the simplex: {probs:?}"
        );
        Self { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_raw(vec![1.0 / n as f64; n])
    }

    /// Point mass on `state`.
    pub fn vertex(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Indices with probability above `tol`, ascending.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > tol)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn max_norm_distance(&self, other: &Belief) -> f64 {
        assert_eq!(self.len(), other.len(), "beliefs on different state spaces");
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn within(&self, other: &Belief, tol: f64) -> bool {
        self.probs
            .iter()
            .zip(&other.probs)
            .all(|(a, b)| (a - b).abs() <= tol)
    }
}

impl TryFrom<Vec<f64>> for Belief {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Belief::new(v)
    }
}

impl From<Belief> for Vec<f64> {
    fn from(b: Belief) -> Vec<f64> {
        b.probs
    }
}

/// One-step open-loop prediction: `b'(to) = sum_from T[a][from][to] * b(from)`.
pub fn predict(model: &PerceptionMdp, belief: &Belief, action: usize) -> Result<Belief> {
    if action >= model.num_actions {
        return Err(Error::ActionOutOfRange {
            action,
            num_actions: model.num_actions,
        });
    }
    let n = model.num_states;
    if belief.len() != n {
        return Err(Error::BeliefLength {
            expected: n,
            got: belief.len(),
        });
    }
    let slice = &model.transition[action];
    let mut next = vec![0.0; n];
    for (from, &mass) in belief.probs().iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for (to, &p) in slice[from].iter().enumerate() {
            next[to] += p * mass;
        }
    }
    Ok(Belief::from_raw(next))
}

/// Bayes update of `prior` under an observation with per-state likelihood
/// `likelihood[s] = P(observation | s)`. Returns the posterior and the
/// marginal observation probability.
pub fn bayes_update(prior: &Belief, likelihood: &[f64]) -> Result<(Belief, f64)> {
    if likelihood.len() != prior.len()
        || likelihood.iter().any(|&l| !(0.0..=1.0).contains(&l) || !l.is_finite())
    {
        return Err(Error::InvalidLikelihood {
            expected: prior.len(),
            got: likelihood.len(),
        });
    }
    let joint: Vec<f64> = prior
        .probs()
        .iter()
        .zip(likelihood)
        .map(|(p, l)| p * l)
        .collect();
    let alpha: f64 = joint.iter().sum();
    if alpha <= 0.0 {
        return Err(Error::ZeroProbabilityObservation { alpha });
    }
    let posterior = Belief::from_raw(joint.into_iter().map(|j| j / alpha).collect());
    Ok((posterior, alpha))
}

/// `KL(p || q)` in nats over the support of `p`; errors when `p` puts mass
/// where `q` has none.
pub fn kl_divergence(p: &Belief, q: &Belief) -> Result<f64> {
    assert_eq!(p.len(), q.len(), "beliefs on different state spaces");
    let mut total = 0.0;
    for (s, (&ps, &qs)) in p.probs().iter().zip(q.probs()).enumerate() {
        if ps <= SUPPORT_TOL {
            continue;
        }
        if qs <= SUPPORT_TOL {
            return Err(Error::DivergenceUndefined { state: s, mass: ps });
        }
        total += ps * (ps / qs).ln();
    }
    Ok(total)
}

/// Shannon entropy in nats.
pub fn entropy(p: &Belief) -> f64 {
    p.probs()
        .iter()
        .filter(|&&x| x > SUPPORT_TOL)
        .map(|&x| -x * x.ln())
        .sum()
}

/// All beliefs whose entries are multiples of `spacing` (which must be `1/k`
/// for integer `k >= 1`), in descending lexicographic order, so the vertex on
/// state 0 comes first. Contains every simplex vertex.
pub fn build_simplex_grid(num_states: usize, spacing: f64) -> Result<Vec<Belief>> {
    if num_states == 0 {
        return Err(Error::BeliefLength {
            expected: 1,
            got: 0,
        });
    }
    if !spacing.is_finite() || spacing <= 0.0 || spacing > 1.0 {
        return Err(Error::BadSpacing { spacing });
    }
    let k = (1.0 / spacing).round();
    if k < 1.0 || (spacing * k - 1.0).abs() > 1e-9 {
        return Err(Error::BadSpacing { spacing });
    }
    let k = k as usize;
    let mut out = Vec::new();
    let mut counts = vec![0usize; num_states];
    fill_compositions(k, 0, &mut counts, &mut out);
    Ok(out)
}

fn fill_compositions(remaining: usize, pos: usize, counts: &mut Vec<usize>, out: &mut Vec<Belief>) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        let k = counts.iter().sum::<usize>() as f64;
        out.push(Belief::from_raw(
            counts.iter().map(|&c| c as f64 / k).collect(),
        ));
        return;
    }
    for c in (0..=remaining).rev() {
        counts[pos] = c;
        fill_compositions(remaining - c, pos + 1, counts, out);
    }
}

/// Localized posterior family for a gridworld: for every cell, six beliefs —
/// the point mass, two 3x3 blurs (center mass 0.5 and 0.75, remainder split
/// evenly over the eight neighbors), and three 5x5 blurs (center mass 0.5,
/// 0.35, 0.2; half the remainder split over the inner ring, half over the
/// outer ring). Out-of-bounds cells are clamped to the nearest in-bounds cell
/// and merged, exactly like the transition builder.
pub fn build_local_blur_set(config: &GridworldConfig) -> Result<Vec<Belief>> {
    config.validate()?;
    let n = config.num_states();
    let mut out = Vec::with_capacity(n * 6);
    for s in 0..n {
        let cell = config.cell_of(s);
        out.push(Belief::vertex(n, s));
        for center in [0.5, 0.75] {
            let mut probs = vec![0.0; n];
            probs[s] += center;
            spread(config, cell.row, cell.col, 1, (1.0 - center) / 8.0, &mut probs);
            out.push(Belief::from_raw(probs));
        }
        for center in [0.5, 0.35, 0.2] {
            let mut probs = vec![0.0; n];
            probs[s] += center;
            let rest = 1.0 - center;
            spread(config, cell.row, cell.col, 1, rest / 16.0, &mut probs);
            spread(config, cell.row, cell.col, 2, rest / 32.0, &mut probs);
            out.push(Belief::from_raw(probs));
        }
    }
    Ok(out)
}

/// Adds `share` at every cell of Chebyshev ring `radius` around (row, col),
/// clamping out-of-bounds cells to the nearest in-bounds cell.
fn spread(
    config: &GridworldConfig,
    row: usize,
    col: usize,
    radius: isize,
    share: f64,
    probs: &mut [f64],
) {
    for dr in -radius..=radius {
        for dc in -radius..=radius {
            if dr.abs().max(dc.abs()) != radius {
                continue;
            }
            let r = (row as isize + dr).clamp(0, config.height as isize - 1) as usize;
            let c = (col as isize + dc).clamp(0, config.width as isize - 1) as usize;
            probs[r * config.width + c] += share;
        }
    }
}

fn dedup_keep_first(candidates: Vec<Belief>) -> (Vec<Belief>, Vec<usize>) {
    let mut kept: Vec<Belief> = Vec::new();
    let mut map = Vec::with_capacity(candidates.len());
    for cand in candidates {
        match kept.iter().position(|k| k.within(&cand, DEDUP_TOL)) {
            Some(idx) => map.push(idx),
            None => {
                kept.push(cand);
                map.push(kept.len() - 1);
            }
        }
    }
    (kept, map)
}

/// The paired belief collections the solver works on: deduplicated posteriors
/// `bhat_m`, the prior set generated from them by the one-step predictors,
/// the `(m, a) -> prior` index map, and the location of each simplex vertex
/// inside the posterior set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeliefSets {
    posteriors: Vec<Belief>,
    priors: Vec<Belief>,
    prior_index: Vec<Vec<usize>>,
    vertex_index: Vec<usize>,
    raw_posterior_count: usize,
    raw_prior_count: usize,
}

impl BeliefSets {
    /// Deduplicates `posteriors`, checks that every simplex vertex is present,
    /// and closes the set under prediction to produce the prior set.
    pub fn build(posteriors: Vec<Belief>, model: &PerceptionMdp) -> Result<Self> {
        let n = model.num_states;
        let raw_posterior_count = posteriors.len();
        for b in &posteriors {
            if b.len() != n {
                return Err(Error::BeliefLength {
                    expected: n,
                    got: b.len(),
                });
            }
        }
        let (posteriors, _) = dedup_keep_first(posteriors);

        let mut vertex_index = Vec::with_capacity(n);
        for s in 0..n {
            let vertex = Belief::vertex(n, s);
            let idx = posteriors
                .iter()
                .position(|b| b.within(&vertex, DEDUP_TOL))
                .ok_or(Error::MissingVertex { state: s })?;
            vertex_index.push(idx);
        }

        let m_count = posteriors.len();
        let raw_prior_count = m_count * model.num_actions;
        let mut candidates = Vec::with_capacity(raw_prior_count);
        for bhat in &posteriors {
            for a in 0..model.num_actions {
                candidates.push(predict(model, bhat, a)?);
            }
        }
        let (priors, map) = dedup_keep_first(candidates);
        let prior_index = (0..m_count)
            .map(|m| (0..model.num_actions).map(|a| map[m * model.num_actions + a]).collect())
            .collect();

        Ok(Self {
            posteriors,
            priors,
            prior_index,
            vertex_index,
            raw_posterior_count,
            raw_prior_count,
        })
    }

    /// Builds the posterior set as a uniform simplex lattice with the given
    /// spacing.
    pub fn from_grid(model: &PerceptionMdp, spacing: f64) -> Result<Self> {
        Self::build(build_simplex_grid(model.num_states, spacing)?, model)
    }

    pub fn posteriors(&self) -> &[Belief] {
        &self.posteriors
    }

    pub fn priors(&self) -> &[Belief] {
        &self.priors
    }

    pub fn num_posteriors(&self) -> usize {
        self.posteriors.len()
    }

    pub fn num_priors(&self) -> usize {
        self.priors.len()
    }

    /// Index of the prior reached by holding posterior `m` and playing `a`.
    pub fn prior_index(&self, m: usize, action: usize) -> usize {
        self.prior_index[m][action]
    }

    /// Index (within the posterior set) of the point mass on `state`.
    pub fn vertex_index(&self, state: usize) -> usize {
        self.vertex_index[state]
    }

    /// Number of posteriors supplied before deduplication.
    pub fn raw_posterior_count(&self) -> usize {
        self.raw_posterior_count
    }

    /// Number of predictor images (deduped posteriors x actions) before
    /// deduplication.
    pub fn raw_prior_count(&self) -> usize {
        self.raw_prior_count
    }

    /// Re-checks every structural invariant against `model`.
    pub fn validate(&self, model: &PerceptionMdp) -> Result<()> {
        let n = model.num_states;
        for b in self.posteriors.iter().chain(&self.priors) {
            Belief::new(b.probs().to_vec())?;
            if b.len() != n {
                return Err(Error::BeliefLength {
                    expected: n,
                    got: b.len(),
                });
            }
        }
        if self.vertex_index.len() != n {
            return Err(Error::LengthMismatch {
                left: self.vertex_index.len(),
                right: n,
            });
        }
        for s in 0..n {
            let idx = self.vertex_index[s];
            let stored = self.posteriors.get(idx).ok_or(Error::IndexOutOfRange {
                what: "posterior set",
                index: idx,
                len: self.posteriors.len(),
            })?;
            if !stored.within(&Belief::vertex(n, s), DEDUP_TOL) {
                return Err(Error::MissingVertex { state: s });
            }
        }
        if self.prior_index.len() != self.posteriors.len() {
            return Err(Error::LengthMismatch {
                left: self.prior_index.len(),
                right: self.posteriors.len(),
            });
        }
        for (m, row) in self.prior_index.iter().enumerate() {
            if row.len() != model.num_actions {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: model.num_actions,
                });
            }
            for (a, &idx) in row.iter().enumerate() {
                let stored = self.priors.get(idx).ok_or(Error::IndexOutOfRange {
                    what: "prior set",
                    index: idx,
                    len: self.priors.len(),
                })?;
                let fresh = predict(model, &self.posteriors[m], a)?;
                if !stored.within(&fresh, SIMPLEX_TOL.max(DEDUP_TOL)) {
                    return Err(Error::InvalidModel(format!(
                        "prior {idx} disagrees with predict(posterior {m}, action {a})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Nearest posterior (max-norm) among those supported inside the support of
/// `b`; ties resolve to the lowest index.
pub fn project_nearest(b: &Belief, posteriors: &[Belief], tol: f64) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (m, cand) in posteriors.iter().enumerate() {
        let admissible = cand
            .probs()
            .iter()
            .zip(b.probs())
            .all(|(&pm, &pb)| pm <= tol || pb > tol);
        if !admissible {
            continue;
        }
        let d = b.max_norm_distance(cand);
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((m, d));
        }
    }
    best.ok_or_else(|| Error::EmptyAdmissibleSet {
        support: b.support(tol),
    })
}

/// Sampled estimate of how densely `posteriors` covers the simplex: the
/// largest support-constrained projection distance seen over `samples`
/// uniform draws (plus, for at most four states, all pairwise midpoints of
/// the posteriors, which catch the worst case of lattice-like sets exactly).
/// A lower bound on the true covering radius.
pub fn estimate_density(posteriors: &[Belief], samples: usize, seed: u64) -> Result<f64> {
    let n = posteriors
        .first()
        .ok_or(Error::EmptyAdmissibleSet { support: vec![] })?
        .len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let mut raw: Vec<f64> = (0..n)
            .map(|_| -(1.0 - rng.gen::<f64>()).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            continue;
        }
        raw.iter_mut().for_each(|x| *x /= total);
        let b = Belief::from_raw(raw);
        let (_, d) = project_nearest(&b, posteriors, SUPPORT_TOL)?;
        worst = worst.max(d);
    }
    if n <= 4 {
        for i in 0..posteriors.len() {
            for j in (i + 1)..posteriors.len() {
                let mid: Vec<f64> = posteriors[i]
                    .probs()
                    .iter()
                    .zip(posteriors[j].probs())
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                let (_, d) = project_nearest(&Belief::from_raw(mid), posteriors, SUPPORT_TOL)?;
                worst = worst.max(d);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mars_default, three_state};
    use proptest::prelude::*;

    #[test]
    fn predict_mixes_columns_of_the_transition_matrix() {
        let m = three_state();
        let b = predict(&m, &Belief::uniform(3), 0).unwrap();
        // column sums of T^{a1} scaled by 1/3
        let expected = [0.2, 0.5, 0.3];
        for (got, want) in b.probs().iter().zip(expected) {
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
        assert!((b.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn predict_rejects_bad_action() {
        let m = three_state();
        assert!(matches!(
            predict(&m, &Belief::uniform(3), 3),
            Err(Error::ActionOutOfRange { action: 3, .. })
        ));
    }

    #[test]
    fn bayes_update_matches_hand_computation() {
        let prior = Belief::new(vec![0.5, 0.5]).unwrap();
        let (post, alpha) = bayes_update(&prior, &[0.2, 0.6]).unwrap();
        assert!((alpha - 0.4).abs() <= 1e-15);
        assert!((post.probs()[0] - 0.25).abs() <= 1e-15);
        assert!((post.probs()[1] - 0.75).abs() <= 1e-15);
    }

    #[test]
    fn bayes_update_rejects_impossible_observation() {
        let prior = Belief::vertex(2, 0);
        assert!(matches!(
            bayes_update(&prior, &[0.0, 1.0]),
            Err(Error::ZeroProbabilityObservation { .. })
        ));
    }

    #[test]
    fn support_filters_dust() {
        let b = Belief::new(vec![0.3, 0.0, 0.7]).unwrap();
        assert_eq!(b.support(SUPPORT_TOL), vec![0, 2]);
        let c = Belief::new(vec![1.0 - 1e-13, 1e-13, 0.0]).unwrap();
        assert_eq!(c.support(SUPPORT_TOL), vec![0]);
    }

    #[test]
    fn kl_divergence_frozen_value_and_edge_cases() {
        let p = Belief::new(vec![0.75, 0.25]).unwrap();
        let q = Belief::uniform(2);
        let d = kl_divergence(&p, &q).unwrap();
        assert!((d - 0.130812035941137).abs() <= 1e-12, "{d}");
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        assert!(kl_divergence(&q, &Belief::vertex(2, 0)).is_err());
        // asymmetric direction is finite: q puts mass everywhere p does
        assert!(kl_divergence(&Belief::vertex(2, 0), &p).unwrap() > 0.0);
    }

    #[test]
    fn entropy_frozen_values() {
        let p = Belief::new(vec![0.75, 0.25]).unwrap();
        assert!((entropy(&p) - 0.5623351446188083).abs() <= 1e-12);
        assert_eq!(entropy(&Belief::vertex(4, 2)), 0.0);
        assert!((entropy(&Belief::uniform(3)) - 3f64.ln()).abs() <= 1e-12);
    }

    #[test]
    fn simplex_grid_counts_match_stars_and_bars() {
        assert_eq!(build_simplex_grid(3, 0.2).unwrap().len(), 21);
        assert_eq!(build_simplex_grid(3, 0.1).unwrap().len(), 66);
        assert_eq!(build_simplex_grid(3, 0.05).unwrap().len(), 231);
        assert_eq!(build_simplex_grid(2, 0.5).unwrap().len(), 3);
        assert_eq!(build_simplex_grid(1, 1.0).unwrap().len(), 1);
    }

    #[test]
    fn simplex_grid_is_on_lattice_and_contains_vertices() {
        let grid = build_simplex_grid(3, 0.2).unwrap();
        for b in &grid {
            assert!((b.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for &p in b.probs() {
                let steps = p / 0.2;
                assert!((steps - steps.round()).abs() <= 1e-9, "{p} off-lattice");
            }
        }
        for s in 0..3 {
            let v = Belief::vertex(3, s);
            assert!(grid.iter().any(|b| b.max_norm_distance(&v) == 0.0));
        }
        // descending lexicographic: vertex on state 0 first
        assert_eq!(grid[0].probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn simplex_grid_rejects_bad_spacing() {
        assert!(matches!(
            build_simplex_grid(3, 0.3),
            Err(Error::BadSpacing { .. })
        ));
        assert!(build_simplex_grid(3, 0.0).is_err());
        assert!(build_simplex_grid(3, -0.5).is_err());
        assert!(build_simplex_grid(3, f64::NAN).is_err());
    }

    #[test]
    fn blur_set_shapes_and_masses() {
        let config = mars_default();
        let set = build_local_blur_set(&config).unwrap();
        assert_eq!(set.len(), 144 * 6);
        for b in &set {
            assert!((b.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        // interior cell (1,1) = state 13: vertex then 3x3 blurs
        let base = 13 * 6;
        assert_eq!(set[base].probs()[13], 1.0);
        assert!((set[base + 1].probs()[13] - 0.5).abs() <= 1e-15);
        assert!((set[base + 1].probs()[12] - 0.0625).abs() <= 1e-15);
        assert!((set[base + 2].probs()[13] - 0.75).abs() <= 1e-15);
        assert!((set[base + 2].probs()[12] - 0.03125).abs() <= 1e-15);
        // 5x5 blur: inner ring cell (1,2)=14 gets (1-0.5)/16, outer ring
        // cell (3,3)=39 gets (1-0.5)/32
        assert!((set[base + 3].probs()[14] - 0.03125).abs() <= 1e-15);
        assert!((set[base + 3].probs()[39] - 0.015625).abs() <= 1e-15);
        assert!((set[base + 5].probs()[13] - 0.2).abs() <= 1e-15);
    }

    #[test]
    fn blur_set_clamps_at_corners() {
        let config = mars_default();
        let set = build_local_blur_set(&config).unwrap();
        // corner cell (0,0), 3x3 blur with center 0.5: three of the eight
        // neighbors clamp back onto the corner
        let b = &set[1];
        assert!((b.probs()[0] - 0.6875).abs() <= 1e-15);
        assert!((b.probs()[1] - 0.125).abs() <= 1e-15);
        assert!((b.probs()[12] - 0.125).abs() <= 1e-15);
        assert!((b.probs()[13] - 0.0625).abs() <= 1e-15);
    }

    #[test]
    fn belief_sets_on_three_state_grid() {
        let model = three_state();
        let sets = BeliefSets::from_grid(&model, 0.2).unwrap();
        assert_eq!(sets.num_posteriors(), 21);
        assert_eq!(sets.raw_posterior_count(), 21);
        assert_eq!(sets.raw_prior_count(), 63);
        // the rows of T^{a1} and T^{a2} coincide at state 3, so the images of
        // its vertex merge; everything else stays distinct
        assert_eq!(sets.num_priors(), 62);
        sets.validate(&model).unwrap();
        for s in 0..3 {
            let m = sets.vertex_index(s);
            assert_eq!(sets.posteriors()[m].probs()[s], 1.0);
        }
        let v3 = sets.vertex_index(2);
        assert_eq!(sets.prior_index(v3, 0), sets.prior_index(v3, 1));
    }

    #[test]
    fn belief_sets_reject_missing_vertex() {
        let model = three_state();
        let posteriors = vec![Belief::uniform(3), Belief::vertex(3, 0), Belief::vertex(3, 1)];
        assert!(matches!(
            BeliefSets::build(posteriors, &model),
            Err(Error::MissingVertex { state: 2 })
        ));
    }

    #[test]
    fn belief_sets_dedup_keeps_first() {
        let model = three_state();
        let mut posteriors = build_simplex_grid(3, 0.5).unwrap();
        posteriors.push(Belief::vertex(3, 0)); // exact duplicate of an earlier entry
        let sets = BeliefSets::build(posteriors, &model).unwrap();
        assert_eq!(sets.raw_posterior_count(), 7);
        assert_eq!(sets.num_posteriors(), 6);
    }

    #[test]
    fn project_nearest_respects_support() {
        let grid = build_simplex_grid(3, 0.2).unwrap();
        let onface = Belief::new(vec![0.6, 0.4, 0.0]).unwrap();
        let (idx, d) = project_nearest(&onface, &grid, SUPPORT_TOL).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(grid[idx].probs(), onface.probs());

        let mid = Belief::new(vec![0.5, 0.5, 0.0]).unwrap();
        let (idx, d) = project_nearest(&mid, &grid, SUPPORT_TOL).unwrap();
        assert!(grid[idx].probs()[2] == 0.0, "projection left the face");
        assert!((d - 0.1).abs() <= 1e-12);
        // lowest-index tie-break: (0.6, 0.4, 0) precedes (0.4, 0.6, 0)
        assert!((grid[idx].probs()[0] - 0.6).abs() <= 1e-12);
    }

    #[test]
    fn density_estimates_frozen_cases() {
        // single state: the only belief is (1.0)
        let single = vec![Belief::vertex(1, 0)];
        assert_eq!(estimate_density(&single, 100, 7).unwrap(), 0.0);
        // two vertices: worst case is the midpoint, distance 1/2
        let verts = vec![Belief::vertex(2, 0), Belief::vertex(2, 1)];
        let d = estimate_density(&verts, 500, 7).unwrap();
        assert!((d - 0.5).abs() <= 1e-12, "{d}");
        // half-spacing lattice halves the radius
        let grid = build_simplex_grid(2, 0.5).unwrap();
        let d = estimate_density(&grid, 500, 7).unwrap();
        assert!((d - 0.25).abs() <= 1e-12, "{d}");
    }

    proptest! {
        #[test]
        fn predict_preserves_simplex(raw in proptest::collection::vec(0.0..1.0f64, 3), action in 0usize..3) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-3);
            let b = Belief::from_raw(raw.iter().map(|x| x / total).collect());
            let model = three_state();
            let next = predict(&model, &b, action).unwrap();
            prop_assert!((next.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(next.probs().iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn bayes_posterior_is_valid_and_support_shrinks(
            raw in proptest::collection::vec(0.0..1.0f64, 4),
            lik in proptest::collection::vec(0.0..=1.0f64, 4),
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-3);
            let prior = Belief::from_raw(raw.iter().map(|x| x / total).collect());
            if let Ok((post, alpha)) = bayes_update(&prior, &lik) {
                prop_assert!(alpha > 0.0 && alpha <= 1.0 + 1e-12);
                prop_assert!((post.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                for s in post.support(SUPPORT_TOL) {
                    prop_assert!(prior.probs()[s] > 0.0);
                }
            }
        }

        #[test]
        fn kl_is_nonnegative(
            raw_p in proptest::collection::vec(1e-3..1.0f64, 3),
            raw_q in proptest::collection::vec(1e-3..1.0f64, 3),
        ) {
            let tp: f64 = raw_p.iter().sum();
            let tq: f64 = raw_q.iter().sum();
            let p = Belief::from_raw(raw_p.iter().map(|x| x / tp).collect());
            let q = Belief::from_raw(raw_q.iter().map(|x| x / tq).collect());
            prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
        }
    }
}
