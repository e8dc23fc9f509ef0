//! Shared helpers for the acceptance tests: an exhaustive LP oracle that
//! knows nothing about the production simplex code, and a uniform sampler
//! over the probability simplex.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Solves the square system `A x = b` by Gaussian elimination with partial
/// pivoting, where `A` is given by columns. Returns `None` when singular.
fn solve_square(columns: &[&[f64]], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    // augmented row-major working copy
    let mut work: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            row.push(rhs[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &b| {
                work[a][col]
                    .abs()
                    .partial_cmp(&work[b][col].abs())
                    .unwrap()
            })
            .unwrap();
        if work[pivot_row][col].abs() < 1e-12 {
            return None;
        }
        work.swap(col, pivot_row);
        let pivot = work[col][col];
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = work[row][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for k in col..=n {
                let delta = factor * work[col][k];
                work[row][k] -= delta;
            }
        }
    }
    Some((0..n).map(|i| work[i][n] / work[i][i]).collect())
}

/// Brute-force LP minimum over every basic solution: tries all ways to pick
/// as many columns as there are constraints, solves each square system, and
/// keeps the best nonnegative solution. Exponential and oblivious to pivot
/// rules — exactly what an independent check should be.
pub fn enumerate_lp_minimum(columns: &[Vec<f64>], rhs: &[f64], costs: &[f64]) -> Option<f64> {
    let n = columns.len();
    let r = rhs.len();
    if n < r {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut subset: Vec<usize> = (0..r).collect();
    loop {
        let chosen: Vec<&[f64]> = subset.iter().map(|&j| columns[j].as_slice()).collect();
        if let Some(x) = solve_square(&chosen, rhs) {
            if x.iter().all(|&v| v >= -1e-9) {
                let objective: f64 = x
                    .iter()
                    .zip(&subset)
                    .map(|(&v, &j)| v * costs[j])
                    .sum();
                best = Some(best.map_or(objective, |b: f64| b.min(objective)));
            }
        }
        // advance the combination odometer
        let mut i = r;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] != i + n - r {
                subset[i] += 1;
                for k in (i + 1)..r {
                    subset[k] = subset[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Uniform draw from the probability simplex on `n` states.
pub fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter_mut().for_each(|x| *x /= total);
    raw
}
