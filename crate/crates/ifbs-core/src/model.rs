//! Perception MDP definition, validation, and built-in benchmark models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::SIMPLEX_TOL;

/// A finite MDP whose controller must buy state information at `beta` cost
/// per nat of directed information.
///
/// `transition[a][s]` is the distribution over successor states after taking
/// action `a` in state `s`; `cost[s][a]` is the nonnegative stage cost.
/// `gamma` is the discount factor, `beta` the price per nat.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerceptionMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub cost: Vec<Vec<f64>>,
    pub gamma: f64,
    pub beta: f64,
}

/// A single validation failure, naming the offending indices.
#[derive(Debug, Clone, PartialEq, Serialize, Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelViolation {
    #[error("num_states must be positive")]
    NoStates,
    #[error("num_actions must be positive")]
    NoActions,
    #[error("transition tensor has {got} action slices, expected {expected}")]
    TransitionActions { expected: usize, got: usize },
    #[error("transition[{action}] has {got} rows, expected {expected}")]
    TransitionRows {
        action: usize,
        expected: usize,
        got: usize,
    },
    #[error("transition[{action}][{state}] has {got} entries, expected {expected}")]
    TransitionRowLength {
        action: usize,
        state: usize,
        expected: usize,
        got: usize,
    },
    #[error("transition[{action}][{state}][{next}] = {value} is not a probability")]
    TransitionEntry {
        action: usize,
        state: usize,
        next: usize,
        value: f64,
    },
    #[error("transition[{action}][{state}] sums to {sum:.17}, expected 1")]
    RowSum { action: usize, state: usize, sum: f64 },
    #[error("cost matrix has {got} rows, expected {expected}")]
    CostRows { expected: usize, got: usize },
    #[error("cost[{state}] has {got} entries, expected {expected}")]
    CostRowLength {
        state: usize,
        expected: usize,
        got: usize,
    },
    #[error("cost[{state}][{action}] = {value} must be finite and nonnegative")]
    CostEntry {
        state: usize,
        action: usize,
        value: f64,
    },
    #[error("gamma = {0} is outside [0, 1)")]
    Gamma(f64),
    #[error("beta = {0} must be finite and nonnegative")]
    Beta(f64),
}

impl PerceptionMdp {
    /// Builds and validates a model in one step.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        cost: Vec<Vec<f64>>,
        gamma: f64,
        beta: f64,
    ) -> Result<Self> {
        let num_actions = transition.len();
        let num_states = cost.len();
        let model = Self {
            num_states,
            num_actions,
            transition,
            cost,
            gamma,
            beta,
        };
        model.ensure_valid()?;
        Ok(model)
    }

    /// Checks every structural invariant and returns the full list of
    /// violations; an empty list means the model is valid.
    pub fn validate(&self) -> Vec<ModelViolation> {
        let mut out = Vec::new();
        let n = self.num_states;
        let a_count = self.num_actions;
        if n == 0 {
            out.push(ModelViolation::NoStates);
        }
        if a_count == 0 {
            out.push(ModelViolation::NoActions);
        }
        if self.transition.len() != a_count {
            out.push(ModelViolation::TransitionActions {
                expected: a_count,
                got: self.transition.len(),
            });
        }
        for (a, slice) in self.transition.iter().enumerate() {
            if slice.len() != n {
                out.push(ModelViolation::TransitionRows {
                    action: a,
                    expected: n,
                    got: slice.len(),
                });
                continue;
            }
            for (s, row) in slice.iter().enumerate() {
                if row.len() != n {
                    out.push(ModelViolation::TransitionRowLength {
                        action: a,
                        state: s,
                        expected: n,
                        got: row.len(),
                    });
                    continue;
                }
                let mut sum = 0.0;
                let mut row_ok = true;
                for (next, &p) in row.iter().enumerate() {
                    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                        out.push(ModelViolation::TransitionEntry {
                            action: a,
                            state: s,
                            next,
                            value: p,
                        });
                        row_ok = false;
                    }
                    sum += p;
                }
                if row_ok && (sum - 1.0).abs() > SIMPLEX_TOL {
                    out.push(ModelViolation::RowSum {
                        action: a,
                        state: s,
                        sum,
                    });
                }
            }
        }
        if self.cost.len() != n {
            out.push(ModelViolation::CostRows {
                expected: n,
                got: self.cost.len(),
            });
        }
        for (s, row) in self.cost.iter().enumerate() {
            if row.len() != a_count {
                out.push(ModelViolation::CostRowLength {
                    state: s,
                    expected: a_count,
                    got: row.len(),
                });
                continue;
            }
            for (a, &c) in row.iter().enumerate() {
                if !c.is_finite() || c < 0.0 {
                    out.push(ModelViolation::CostEntry {
                        state: s,
                        action: a,
                        value: c,
                    });
                }
            }
        }
        if !self.gamma.is_finite() || !(0.0..1.0).contains(&self.gamma) {
            out.push(ModelViolation::Gamma(self.gamma));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            out.push(ModelViolation::Beta(self.beta));
        }
        out
    }

    /// Errors with the first violation's message if the model is invalid.
    pub fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidModel(
                violations
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            ))
        }
    }

    /// Distribution over successor states for `(action, state)`.
    pub fn transition_row(&self, action: usize, state: usize) -> Result<&[f64]> {
        let slice = self
            .transition
            .get(action)
            .ok_or(Error::ActionOutOfRange {
                action,
                num_actions: self.num_actions,
            })?;
        slice
            .get(state)
            .map(Vec::as_slice)
            .ok_or(Error::StateOutOfRange {
                state,
                num_states: self.num_states,
            })
    }

    pub fn stage_cost(&self, state: usize, action: usize) -> f64 {
        self.cost[state][action]
    }
}

/// The three-state benchmark: two productive actions that cycle probability
/// mass through the states, plus a near-reliable "stay" action; only the
/// third state is costly. Discount 0.95, information price 5 nats^-1.
pub fn three_state() -> PerceptionMdp {
    let transition = vec![
        vec![
            vec![0.1, 0.9, 0.0],
            vec![0.0, 0.1, 0.9],
            vec![0.5, 0.5, 0.0],
        ],
        vec![
            vec![0.1, 0.0, 0.9],
            vec![0.9, 0.1, 0.0],
            vec![0.5, 0.5, 0.0],
        ],
        vec![
            vec![0.998, 0.001, 0.001],
            vec![0.001, 0.998, 0.001],
            vec![0.001, 0.001, 0.998],
        ],
    ];
    let cost = vec![
        vec![0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0],
        vec![1.0, 1.0, 1.0],
    ];
    PerceptionMdp::new(transition, cost, 0.95, 5.0).expect("built-in model is valid")
}

/// Grid cell addressed as (row, col); state index is `row * width + col`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Rover navigation gridworld. Four move actions (up, down, left, right);
/// a move lands on the intended neighbor with probability `1 - slip_mass`
/// and spreads `slip_mass / 8` over the eight other cells of the 3x3
/// neighborhood (including staying put); out-of-bounds targets are clamped
/// to the nearest in-bounds cell and merged. Goal and rock cells are
/// absorbing; goals cost nothing, every other state costs `step_cost` per
/// step (so an absorbed rover in a rock pays forever).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridworldConfig {
    pub width: usize,
    pub height: usize,
    pub start: Cell,
    pub goals: Vec<Cell>,
    pub rocks: Vec<Cell>,
    #[serde(default = "default_slip_mass")]
    pub slip_mass: f64,
    #[serde(default = "default_step_cost")]
    pub step_cost: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub beta: f64,
}

fn default_slip_mass() -> f64 {
    0.05
}
fn default_step_cost() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.95
}

/// Action indices for the gridworld, in declaration order.
pub const GRID_ACTIONS: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

impl GridworldConfig {
    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state_of(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_of(&self, state: usize) -> Cell {
        Cell::new(state / self.width, state % self.width)
    }

    fn in_bounds(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    fn clamp(&self, row: isize, col: isize) -> Cell {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        Cell::new(r, c)
    }

    pub fn is_goal(&self, cell: Cell) -> bool {
        self.goals.contains(&cell)
    }

    pub fn is_rock(&self, cell: Cell) -> bool {
        self.rocks.contains(&cell)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.width == 0 || self.height == 0 {
            return fail(format!("grid is {}x{}", self.height, self.width));
        }
        if !self.in_bounds(self.start) {
            return fail(format!("start {:?} is out of bounds", self.start));
        }
        if self.goals.is_empty() {
            return fail("no goal cells".into());
        }
        for &g in &self.goals {
            if !self.in_bounds(g) {
                return fail(format!("goal {g:?} is out of bounds"));
            }
        }
        for &r in &self.rocks {
            if !self.in_bounds(r) {
                return fail(format!("rock {r:?} is out of bounds"));
            }
            if self.goals.contains(&r) {
                return fail(format!("cell {r:?} is both a goal and a rock"));
            }
        }
        if self.is_rock(self.start) {
            return fail(format!("start {:?} is a rock", self.start));
        }
        if !self.slip_mass.is_finite() || !(0.0..1.0).contains(&self.slip_mass) {
            return fail(format!("slip_mass {} is outside [0, 1)", self.slip_mass));
        }
        if !self.step_cost.is_finite() || self.step_cost < 0.0 {
            return fail(format!("step_cost {} must be nonnegative", self.step_cost));
        }
        if !self.gamma.is_finite() || !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma {} is outside [0, 1)", self.gamma));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return fail(format!("beta {} must be nonnegative", self.beta));
        }
        Ok(())
    }
}

/// Expands a gridworld config into an explicit perception MDP.
pub fn build_gridworld(config: &GridworldConfig) -> Result<PerceptionMdp> {
    config.validate()?;
    let n = config.num_states();
    let mut transition = vec![vec![vec![0.0; n]; n]; GRID_ACTIONS.len()];
    let mut cost = vec![vec![0.0; GRID_ACTIONS.len()]; n];
    let slip_share = config.slip_mass / 8.0;

    for s in 0..n {
        let cell = config.cell_of(s);
        let absorbing = config.is_goal(cell) || config.is_rock(cell);
        for (a, &(dr, dc)) in GRID_ACTIONS.iter().enumerate() {
            if absorbing {
                transition[a][s][s] = 1.0;
                continue;
            }
            let row = &mut transition[a][s];
            let ir = cell.row as isize + dr;
            let ic = cell.col as isize + dc;
            row[config.state_of(config.clamp(ir, ic))] += 1.0 - config.slip_mass;
            for ndr in -1..=1isize {
                for ndc in -1..=1isize {
                    if (ndr, ndc) == (dr, dc) {
                        continue;
                    }
                    let target =
                        config.clamp(cell.row as isize + ndr, cell.col as isize + ndc);
                    row[config.state_of(target)] += slip_share;
                }
            }
        }
        if !config.is_goal(cell) {
            cost[s] = vec![config.step_cost; GRID_ACTIONS.len()];
        }
    }
    PerceptionMdp::new(transition, cost, config.gamma, config.beta)
}

/// Default rover benchmark: 12x12 grid, a 4x4 rock field splitting a short
/// exposed route under the rocks from a longer safe route above them, start
/// on the west edge, 2x2 goal pad on the east edge.
pub fn mars_default() -> GridworldConfig {
    let mut rocks = Vec::new();
    for row in 3..=6 {
        for col in 4..=7 {
            rocks.push(Cell::new(row, col));
        }
    }
    let mut goals = Vec::new();
    for row in 5..=6 {
        for col in 10..=11 {
            goals.push(Cell::new(row, col));
        }
    }
    GridworldConfig {
        width: 12,
        height: 12,
        start: Cell::new(6, 0),
        goals,
        rocks,
        slip_mass: 0.05,
        step_cost: 1.0,
        gamma: 0.95,
        beta: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_state_matches_published_tables() {
        let m = three_state();
        assert_eq!(m.num_states, 3);
        assert_eq!(m.num_actions, 3);
        assert_eq!(m.transition[0][0], vec![0.1, 0.9, 0.0]);
        assert_eq!(m.transition[1][1], vec![0.9, 0.1, 0.0]);
        assert_eq!(m.transition[2][2], vec![0.001, 0.001, 0.998]);
        assert_eq!(m.transition[0][2], m.transition[1][2]);
        assert_eq!(m.cost[2], vec![1.0, 1.0, 1.0]);
        assert_eq!(m.cost[0], vec![0.0, 0.0, 0.0]);
        assert_eq!(m.gamma, 0.95);
        assert_eq!(m.beta, 5.0);
        assert!(m.validate().is_empty());
    }

    #[test]
    fn validate_reports_each_broken_invariant() {
        let mut m = three_state();
        m.transition[1][0][2] = 0.2; // row now sums to 1.2
        m.cost[0][1] = -1.0;
        m.gamma = 1.0;
        m.beta = f64::NAN;
        let violations = m.validate();
        assert!(violations
            .iter()
            .any(|v| matches!(v, ModelViolation::RowSum { action: 1, state: 0, .. })));
        assert!(violations
            .iter()
            .any(|v| matches!(v, ModelViolation::CostEntry { state: 0, action: 1, .. })));
        assert!(violations.iter().any(|v| matches!(v, ModelViolation::Gamma(_))));
        assert!(violations.iter().any(|v| matches!(v, ModelViolation::Beta(_))));
        assert_eq!(violations.len(), 4);
    }

    #[test]
    fn validate_rejects_probability_out_of_range() {
        let mut m = three_state();
        m.transition[0][1][0] = -0.1;
        let violations = m.validate();
        assert!(violations.iter().any(|v| matches!(
            v,
            ModelViolation::TransitionEntry { action: 0, state: 1, next: 0, .. }
        )));
    }

    fn tiny_grid() -> GridworldConfig {
        GridworldConfig {
            width: 3,
            height: 3,
            start: Cell::new(2, 0),
            goals: vec![Cell::new(0, 2)],
            rocks: vec![Cell::new(1, 1)],
            slip_mass: 0.05,
            step_cost: 1.0,
            gamma: 0.95,
            beta: 0.0,
        }
    }

    #[test]
    fn gridworld_rows_are_stochastic_and_absorbing_where_required() {
        let config = tiny_grid();
        let m = build_gridworld(&config).unwrap();
        assert!(m.validate().is_empty());
        for a in 0..m.num_actions {
            for s in 0..m.num_states {
                let sum: f64 = m.transition[a][s].iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12, "row ({a},{s}) sums to {sum}");
            }
        }
        let goal = config.state_of(Cell::new(0, 2));
        let rock = config.state_of(Cell::new(1, 1));
        for a in 0..m.num_actions {
            assert_eq!(m.transition[a][goal][goal], 1.0);
            assert_eq!(m.transition[a][rock][rock], 1.0);
        }
        assert_eq!(m.cost[goal], vec![0.0; 4]);
        assert_eq!(m.cost[rock], vec![1.0; 4]);
    }

    #[test]
    fn gridworld_corner_clamps_and_merges_slip_mass() {
        // 3x3 grid, cell (0,0), action up: the intended target (-1,0) clamps
        // onto (0,0); three of the slip cells also clamp there.
        let config = GridworldConfig {
            rocks: vec![],
            goals: vec![Cell::new(2, 2)],
            ..tiny_grid()
        };
        let m = build_gridworld(&config).unwrap();
        let row = &m.transition[0][0];
        let share = 0.05 / 8.0;
        assert!((row[0] - (0.95 + 3.0 * share)).abs() < 1e-15);
        assert!((row[1] - 2.0 * share).abs() < 1e-15);
        assert!((row[3] - 2.0 * share).abs() < 1e-15);
        assert!((row[4] - share).abs() < 1e-15);
        assert_eq!(row.iter().filter(|&&p| p > 0.0).count(), 4);
    }

    #[test]
    fn gridworld_interior_move_lands_where_intended() {
        let mut config = tiny_grid();
        config.rocks.clear();
        let m = build_gridworld(&config).unwrap();
        // centre cell (1,1) = state 4, action right -> (1,2) = state 5
        let row = &m.transition[3][4];
        assert!((row[5] - 0.95).abs() < 1e-15);
        let share = 0.05 / 8.0;
        for s in [0, 1, 2, 3, 4, 6, 7, 8] {
            assert!((row[s] - share).abs() < 1e-15);
        }
    }

    #[test]
    fn config_validation_rejects_bad_layouts() {
        let mut c = tiny_grid();
        c.start = Cell::new(1, 1); // on a rock
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));

        let mut c = tiny_grid();
        c.goals = vec![Cell::new(5, 5)];
        assert!(c.validate().is_err());

        let mut c = tiny_grid();
        c.rocks.push(Cell::new(0, 2)); // collides with the goal
        assert!(c.validate().is_err());

        let mut c = tiny_grid();
        c.slip_mass = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mars_default_layout_frozen() {
        let config = mars_default();
        assert_eq!(config.num_states(), 144);
        assert_eq!(config.rocks.len(), 16);
        assert_eq!(config.goals.len(), 4);
        assert_eq!(config.state_of(config.start), 72);
        config.validate().unwrap();
        let m = build_gridworld(&config).unwrap();
        assert!(m.validate().is_empty());
    }

    #[test]
    fn model_json_round_trips_with_expected_field_names() {
        let text = r#"{
            "num_states": 2,
            "num_actions": 1,
            "transition": [[[0.5, 0.5], [0.0, 1.0]]],
            "cost": [[0.0], [1.0]],
            "gamma": 0.9,
            "beta": 0.5
        }"#;
        let m: PerceptionMdp = serde_json::from_str(text).unwrap();
        assert!(m.validate().is_empty());
        assert_eq!(m.transition[0][0][1], 0.5);
        let back = serde_json::to_string(&m).unwrap();
        let again: PerceptionMdp = serde_json::from_str(&back).unwrap();
        assert_eq!(again.cost, m.cost);
    }
}
