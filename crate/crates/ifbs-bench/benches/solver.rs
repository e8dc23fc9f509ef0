//! Benchmarks of the three costs that dominate a solve: a cold prior-backup
//! LP, the warm re-solve that value-iteration sweeps actually pay, and one
//! full sweep; plus the gridworld belief-set construction (blur family,
//! one-step images, dedup, index maps) that precedes them.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};

use ifbs_core::belief::{build_local_blur_set, BeliefSets};
use ifbs_core::lp::{LpSkeleton, WarmLp};
use ifbs_core::model::{build_gridworld, mars_default, three_state};
use ifbs_core::solver::{value_iteration, SolveOptions};
use ifbs_core::SUPPORT_TOL;

/// The three-state benchmark solved on a simplex grid, plus the skeleton of
/// its widest prior-backup LP with converged costs.
fn lp_fixture(spacing: f64) -> (LpSkeleton, Vec<f64>) {
    let model = three_state();
    let sets = BeliefSets::from_grid(&model, spacing).unwrap();
    let result = value_iteration(&model, &sets, &SolveOptions::default()).unwrap();
    let widest = sets
        .priors()
        .iter()
        .max_by_key(|b| b.support(SUPPORT_TOL).len())
        .unwrap();
    let skeleton = LpSkeleton::build(widest, sets.posteriors(), SUPPORT_TOL).unwrap();
    let costs = skeleton.costs(&result.posterior_values, model.beta);
    (skeleton, costs)
}

fn prior_backup_lp(c: &mut Criterion) {
    let (skeleton, costs) = lp_fixture(0.05);

    c.bench_function("lp cold solve (full-support prior, 1/20 grid)", |b| {
        b.iter(|| black_box(skeleton.solve_with_costs(black_box(&costs))))
    });

    c.bench_function("lp warm re-solve (converged basis)", |b| {
        let mut warm = WarmLp::new(&skeleton).unwrap();
        warm.solve(&skeleton, &costs);
        b.iter(|| black_box(warm.solve(&skeleton, black_box(&costs))))
    });
}

fn value_iteration_sweep(c: &mut Criterion) {
    let model = three_state();
    let sets = BeliefSets::from_grid(&model, 0.05).unwrap();
    let one_sweep = SolveOptions {
        max_iter: 1,
        ..SolveOptions::default()
    };
    let mut group = c.benchmark_group("sweep");
    group.sample_size(20);
    group.bench_function("value iteration, one sweep (1/20 grid)", |b| {
        b.iter(|| black_box(value_iteration(&model, &sets, &one_sweep)))
    });
    group.finish();
}

fn belief_set_build(c: &mut Criterion) {
    let config = mars_default();
    let model = build_gridworld(&config).unwrap();
    let mut group = c.benchmark_group("sets");
    group.sample_size(10);
    group.measurement_time(Duration::from_secs(8));
    group.bench_function("blur posteriors + prior images (12x12 grid)", |b| {
        b.iter(|| {
            let posteriors = build_local_blur_set(black_box(&config)).unwrap();
            black_box(BeliefSets::build(posteriors, &model).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, prior_backup_lp, value_iteration_sweep, belief_set_build);
criterion_main!(benches);
