//! Benchmarks for the solver hot paths. Bench IDs carry the build mode, so
//! running `cargo bench` (rayon) and `cargo bench --no-default-features`
//! (sequential) produces directly comparable reports.

use criterion::{criterion_group, criterion_main, Criterion};

use gridstack_core::analysis::{nashconv, verify_potential_property};
use gridstack_core::fixtures;
use gridstack_core::fp::{fp_mdp_solve, FpOptions, Schedule};
use gridstack_core::mdp::DEFAULT_STATE_CAP;
use gridstack_core::model::build_reduced_game;
use gridstack_core::mpg::{fip_solve, lift_to_pme, PurePublicPolicy};
use gridstack_core::pricing::grid_search_pricing;

fn mode() -> &'static str {
    if cfg!(feature = "parallel") {
        "parallel"
    } else {
        "sequential"
    }
}

fn bench_fip_50_users(c: &mut Criterion) {
    let g2 = build_reduced_game(&fixtures::example1().game).unwrap();
    let initial: Vec<PurePublicPolicy> =
        (0..g2.num_users()).map(|_| PurePublicPolicy::zeros(7, 3)).collect();
    c.bench_function(&format!("fip_solve/50_users_7_stages/{}", mode()), |b| {
        b.iter(|| fip_solve(&g2, initial.clone(), 10_000))
    });
}

fn bench_nashconv(c: &mut Criterion) {
    let g1 = fixtures::example2().game;
    let g2 = build_reduced_game(&g1).unwrap();
    let eq = fip_solve(&g2, (0..3).map(|_| PurePublicPolicy::zeros(3, 3)).collect(), 10_000);
    let lifted = lift_to_pme(&eq.policies, &g1);
    c.bench_function(&format!("nashconv/3_users_81_joint_states/{}", mode()), |b| {
        b.iter(|| nashconv(&lifted, &g1, DEFAULT_STATE_CAP).unwrap())
    });
}

fn bench_potential_audit(c: &mut Criterion) {
    let g2 = build_reduced_game(&fixtures::example2().game).unwrap();
    c.bench_function(&format!("potential_audit/1000_deviations/{}", mode()), |b| {
        b.iter(|| verify_potential_property(&g2, 1_000, 7))
    });
}

fn bench_pricing_grid(c: &mut Criterion) {
    let loaded = fixtures::example3();
    let grid = loaded.grid.clone().unwrap();
    c.bench_function(&format!("grid_search/3x3_cells_50_users/{}", mode()), |b| {
        b.iter(|| grid_search_pricing(&loaded.game, &grid, 10_000).unwrap())
    });
}

fn bench_fp_learning(c: &mut Criterion) {
    let g1 = fixtures::example2().game;
    let opts = FpOptions {
        iterations: 100,
        seed: 0,
        eval_every: 100,
        state_cap: DEFAULT_STATE_CAP,
        schedule: Schedule::Harmonic,
    };
    c.bench_function(&format!("fp_mdp/100_episodes/{}", mode()), |b| {
        b.iter(|| fp_mdp_solve(&g1, &opts).unwrap())
    });
}

criterion_group!(
    benches,
    bench_fip_50_users,
    bench_nashconv,
    bench_potential_audit,
    bench_pricing_grid,
    bench_fp_learning
);
criterion_main!(benches);
