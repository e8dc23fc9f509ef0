//! Plain-text table renderings of solve and simulation artifacts.
//!
//! All emitters return the finished CSV as a string (header included, one
//! trailing newline) and format floats with the shortest round-trip
//! representation, so identical inputs produce byte-identical files.

use crate::diagnostics::MonotonicityRow;
use crate::simulator::{CostSummary, ResidenceHistogram};

fn two_column(header: &str, values: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for line in values {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// `prior_index,value` rows.
pub fn values_prior_csv(values: &[f64]) -> String {
    two_column(
        "prior_index,value",
        values.iter().enumerate().map(|(i, v)| format!("{i},{v}")),
    )
}

/// `posterior_index,value` rows.
pub fn values_posterior_csv(values: &[f64]) -> String {
    two_column(
        "posterior_index,value",
        values.iter().enumerate().map(|(i, v)| format!("{i},{v}")),
    )
}

/// `posterior_index,action` rows.
pub fn actions_csv(actions: &[usize]) -> String {
    two_column(
        "posterior_index,action",
        actions.iter().enumerate().map(|(i, a)| format!("{i},{a}")),
    )
}

/// `prior_index,posterior_index,alpha` triplets of every positive mixture
/// weight, priors in order.
pub fn alpha_csv(alpha: &[Vec<(usize, f64)>]) -> String {
    let mut out = String::from("prior_index,posterior_index,alpha\n");
    for (b, weights) in alpha.iter().enumerate() {
        for &(m, w) in weights {
            out.push_str(&format!("{b},{m},{w}\n"));
        }
    }
    out
}

/// `time,state,fraction` rows of the residence histogram at the requested
/// time slices, in the order given. Slices beyond the recorded horizon are
/// skipped.
pub fn residence_csv(histogram: &ResidenceHistogram, slices: &[usize]) -> String {
    let mut out = String::from("time,state,fraction\n");
    for &t in slices {
        if t >= histogram.num_time_steps() {
            continue;
        }
        for s in 0..histogram.num_states() {
            out.push_str(&format!("{t},{s},{}\n", histogram.fraction(t, s)));
        }
    }
    out
}

/// `spacing,set,belief_index,value` rows of a monotonicity run.
pub fn monotonicity_csv(rows: &[MonotonicityRow]) -> String {
    let mut out = String::from("spacing,set,belief_index,value\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.spacing, row.set, row.belief_index, row.value
        ));
    }
    out
}

/// Single-row CSV of a batch cost summary.
pub fn costs_csv(summary: &CostSummary) -> String {
    format!(
        "trials,horizon,gamma,beta,env_mean,env_se,info_mean,info_se,total_mean,total_se,tail_bound\n\
         {},{},{},{},{},{},{},{},{},{},{}\n",
        summary.trials,
        summary.horizon,
        summary.gamma,
        summary.beta,
        summary.env_mean,
        summary.env_se,
        summary.info_mean,
        summary.info_se,
        summary.total_mean,
        summary.total_se,
        summary.tail_bound,
    )
}
