use std::f64::consts::PI;

use ben_core::convex_core::PowerDensity;
use ben_core::discretization::{Field, SpaceGrid, Trajectory};
use ben_core::energy::{certificate, energy_and_gradient, eval_energy};
use ben_core::models::{Evolution, Flux, ModelSpec, Reaction};
use ben_core::solver::{implicit_baseline, initial_trajectory, minimize, SolveOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn models() -> Vec<ModelSpec> {
    vec![
        ModelSpec::heat(),
        ModelSpec::burgers(10.0).unwrap(),
        ModelSpec::divergence_form(
            PowerDensity::new(1.0, 4.0, 0.2).unwrap(),
            Reaction::Linear { rate: -1.0, source: 2.0 },
            Flux::Sine { coeff: 0.5 },
        )
        .unwrap(),
    ]
}

fn sine(grid: SpaceGrid) -> Field {
    Field::from_fn(grid, 1, |x, _| (0..grid.dimension()).map(|r| (PI * x[r]).sin()).product())
}

#[test]
fn energy_is_nonnegative_on_random_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let grid = SpaceGrid::new(1, 9).unwrap();
    for model in models() {
        let ev = Evolution::new(model.clone(), grid, 1).unwrap();
        let mut worst = f64::INFINITY;
        for _ in 0..1000 {
            let m = rng.gen_range(1..6);
            let amp = 10f64.powf(rng.gen_range(-3.0..1.5));
            let states = (0..=m)
                .map(|_| {
                    let v = (0..grid.node_count()).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
                    Field::from_values(grid, 1, v).unwrap()
                })
                .collect();
            let traj = Trajectory::from_states(rng.gen_range(0.01..1.0), states).unwrap();
            worst = worst.min(eval_energy(&ev, &traj).unwrap().total);
        }
        assert!(worst >= -1e-9, "{}: {worst}", model.name);
    }
}

#[test]
fn minimized_solutions_are_certified_in_two_dimensions() {
    let grid = SpaceGrid::new(2, 7).unwrap();
    for model in models() {
        let ev = Evolution::new(model.clone(), grid, 1).unwrap();
        let opts = SolveOptions::default();
        let init = initial_trajectory(&sine(grid), 0.05, 8, &opts).unwrap();
        let out = minimize(&ev, &init, &opts).unwrap();
        assert!(out.converged, "{}", model.name);
        assert!(certificate(&ev, &out.trajectory, 1e-6).unwrap().solved, "{}", model.name);
        let (_, grad) = energy_and_gradient(&ev, &out.trajectory).unwrap();
        assert_eq!(grad[0].max_abs(), 0.0);
    }
}

#[test]
fn baseline_energy_is_small_and_decreasing_in_tau() {
    let grid = SpaceGrid::new(1, 33).unwrap();
    let ev = Evolution::new(ModelSpec::heat(), grid, 1).unwrap();
    let r64 = eval_energy(&ev, &implicit_baseline(&ev, &sine(grid), 0.1, 64).unwrap()).unwrap();
    let r128 = eval_energy(&ev, &implicit_baseline(&ev, &sine(grid), 0.1, 128).unwrap()).unwrap();
    assert!(r64.normalized <= 1e-2);
    assert!(r128.normalized < r64.normalized);
    let b = implicit_baseline(&ev, &sine(grid), 0.1, 64).unwrap();
    assert!(certificate(&ev, &b, 1e-1).unwrap().solved);
}

#[test]
fn steepest_descent_also_descends() {
    let grid = SpaceGrid::new(1, 7).unwrap();
    let ev = Evolution::new(ModelSpec::heat(), grid, 1).unwrap();
    let opts = SolveOptions {
        use_lbfgs: false,
        max_iters: 200,
        ..SolveOptions::default()
    };
    let init = initial_trajectory(&sine(grid), 0.1, 4, &opts).unwrap();
    let out = minimize(&ev, &init, &opts).unwrap();
    assert!(out.history.windows(2).all(|w| w[1].energy <= w[0].energy));
    assert!(out.history.last().unwrap().energy < 1e-2 * out.history[0].energy);
}

#[test]
fn multicomponent_q4_problem_matches_its_baseline_order() {
    let grid = SpaceGrid::new(1, 15).unwrap();
    let model = models().pop().unwrap();
    let ev = Evolution::new(model, grid, 2).unwrap();
    let w0 = Field::from_fn(grid, 2, |x, c| (1.0 + c as f64) * (PI * x[0]).sin());
    let opts = SolveOptions::default();
    let gap = |m: usize| {
        let init = initial_trajectory(&w0, 0.05, m, &opts).unwrap();
        let out = minimize(&ev, &init, &opts).unwrap();
        assert!(out.converged);
        let base = implicit_baseline(&ev, &w0, 0.05, m).unwrap();
        ben_core::solver::compare(&out.trajectory, &base).unwrap().relative_l2
    };
    // stiff at this tau, so only the first-order shrinkage is checked
    let (g16, g32) = (gap(16), gap(32));
    let ratio = g16 / g32;
    assert!(g32 < 0.1, "{g32}");
    assert!((1.6..2.5).contains(&ratio), "{g16} {g32}");
}
