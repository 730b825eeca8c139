//! Minimization of `J` over trajectories, the implicit-Euler baseline it is
//! checked against, and trajectory comparison.

mod baseline;
mod minimize;

pub use baseline::implicit_baseline;
pub use minimize::{minimize, HistoryEntry, SolveOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{Field, Trajectory};
use crate::error::{Error, Result};
use crate::models::Evolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub c1: f64,
    pub backtrack: f64,
    pub max_trials: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            backtrack: 0.5,
            max_trials: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Bound on the `L²(0,T;H)` norm of the gradient.
    pub grad_tol: f64,
    /// Bound on the normalized energy.
    pub energy_tol: f64,
    pub line_search: LineSearch,
    pub use_lbfgs: bool,
    pub memory: usize,
    pub seed: u64,
    /// Amplitude of the random perturbation added to the constant
    /// initialization, relative to `max |w₀|`.
    pub init_noise: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            grad_tol: 1e-10,
            energy_tol: 1e-13,
            line_search: LineSearch::default(),
            use_lbfgs: true,
            memory: 10,
            seed: 0,
            init_noise: 0.1,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let ls = &self.line_search;
        if !(self.grad_tol > 0.0 && self.energy_tol > 0.0) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if self.memory == 0 {
            return Err(Error::InvalidInput("L-BFGS memory must be at least 1".into()));
        }
        if !(ls.c1 > 0.0 && ls.c1 < 1.0 && ls.backtrack > 0.0 && ls.backtrack < 1.0 && ls.max_trials > 0) {
            return Err(Error::InvalidInput("invalid line-search parameters".into()));
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return Err(Error::InvalidInput("init_noise must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Constant-in-time extension of `w0` plus seeded uniform noise of
/// amplitude `init_noise · max |w0|` on `u_1 … u_M`.
pub fn initial_trajectory(w0: &Field, horizon: f64, intervals: usize, opts: &SolveOptions) -> Result<Trajectory> {
    let base = Trajectory::constant(w0, horizon, intervals)?;
    let amp = opts.init_noise * w0.max_abs();
    if amp == 0.0 {
        return Ok(base);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let values: Vec<f64> = base
        .free_values()
        .into_iter()
        .map(|v| v + amp * rng.gen_range(-1.0..1.0))
        .collect();
    Ok(base.with_free_values(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `‖a − b‖ / max(‖a‖, ‖b‖)` in the trapezoidal `L²(0,T;H)` norm.
    pub relative_l2: f64,
    pub absolute_l2: f64,
    pub max_node: f64,
}

fn l2_norm(traj_a: &Trajectory, f: impl Fn(usize) -> Vec<f64>) -> f64 {
    let w = traj_a.grid().cell_volume();
    let times = traj_a.times();
    let m = traj_a.intervals();
    let mut s = 0.0;
    for k in 0..=m {
        let dt = if k == 0 {
            0.5 * (times[1] - times[0])
        } else if k == m {
            0.5 * (times[m] - times[m - 1])
        } else {
            0.5 * (times[k + 1] - times[k - 1])
        };
        s += dt * w * f(k).iter().map(|v| v * v).sum::<f64>();
    }
    s.sqrt()
}

pub fn compare(a: &Trajectory, b: &Trajectory) -> Result<Comparison> {
    if a.grid() != b.grid() || a.components() != b.components() || a.intervals() != b.intervals() {
        return Err(Error::ShapeMismatch("trajectories differ in grid or time nodes".into()));
    }
    if a.times().iter().zip(b.times()).any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0)) {
        return Err(Error::ShapeMismatch("trajectories have different time nodes".into()));
    }
    let diff = |k: usize| -> Vec<f64> {
        a.state(k)
            .values()
            .iter()
            .zip(b.state(k).values())
            .map(|(x, y)| x - y)
            .collect()
    };
    let absolute = l2_norm(a, diff);
    let na = l2_norm(a, |k| a.state(k).values().to_vec());
    let nb = l2_norm(a, |k| b.state(k).values().to_vec());
    let denom = na.max(nb);
    let max_node = (0..=a.intervals())
        .flat_map(|k| {
            a.state(k)
                .values()
                .iter()
                .zip(b.state(k).values())
                .map(|(x, y)| (x - y).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max);
    Ok(Comparison {
        relative_l2: if denom == 0.0 { 0.0 } else { absolute / denom },
        absolute_l2: absolute,
        max_node,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub max_discrepancy: f64,
    pub converged_seeds: Vec<u64>,
    /// Seeds that failed or did not converge, with the reason.
    pub failures: Vec<(u64, String)>,
}

/// Minimizes from `n_seeds` random initializations sharing `w0` and returns
/// the worst pairwise relative discrepancy among the converged minimizers.
pub fn uniqueness_probe(
    ev: &Evolution,
    w0: &Field,
    horizon: f64,
    intervals: usize,
    opts: &SolveOptions,
    n_seeds: usize,
) -> Result<UniquenessReport> {
    if n_seeds < 2 {
        return Err(Error::InvalidInput("uniqueness probe needs at least two seeds".into()));
    }
    let runs: Vec<(u64, Result<SolveOutcome>)> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = opts.seed.wrapping_add(i);
            let o = SolveOptions { seed, ..*opts };
            let run = initial_trajectory(w0, horizon, intervals, &o).and_then(|init| minimize(ev, &init, &o));
            (seed, run)
        })
        .collect();
    let mut good = Vec::new();
    let mut failures = Vec::new();
    for (seed, run) in runs {
        match run {
            Ok(out) if out.converged => good.push((seed, out.trajectory)),
            Ok(out) => failures.push((seed, format!("not converged after {} iterations", out.iterations))),
            Err(e) => failures.push((seed, e.to_string())),
        }
    }
    if good.len() < 2 {
        return Err(Error::NumericalFailure {
            what: format!("uniqueness probe ({} of {n_seeds} seeds converged)", good.len()),
            residual: f64::NAN,
        });
    }
    let mut worst: f64 = 0.0;
    for i in 0..good.len() {
        for j in i + 1..good.len() {
            worst = worst.max(compare(&good[i].1, &good[j].1)?.relative_l2);
        }
    }
    Ok(UniquenessReport {
        max_discrepancy: worst,
        converged_seeds: good.iter().map(|(s, _)| *s).collect(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::SpaceGrid;
    use crate::energy::{eval_energy, residual};
    use crate::models::ModelSpec;
    use std::f64::consts::PI;

    fn sine(grid: SpaceGrid) -> Field {
        Field::from_fn(grid, 1, |x, _| (PI * x[0]).sin())
    }

    #[test]
    fn single_node_heat_step() {
        let grid = SpaceGrid::new(1, 1).unwrap();
        let ev = Evolution::new(ModelSpec::heat(), grid, 1).unwrap();
        let w0 = Field::from_values(grid, 1, vec![1.0]).unwrap();
        let traj = implicit_baseline(&ev, &w0, 0.125, 1).unwrap();
        assert!((traj.state(1).values()[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_datum_gives_zero_baseline() {
        let grid = SpaceGrid::new(1, 9).unwrap();
        let ev = Evolution::new(ModelSpec::burgers(10.0).unwrap(), grid, 1).unwrap();
        let traj = implicit_baseline(&ev, &Field::zeros(grid, 1), 0.1, 8).unwrap();
        assert!(traj.states().iter().all(|s| s.max_abs() == 0.0));
    }

    #[test]
    fn baseline_residual_tracks_its_step_equation() {
        // H_k − DΨ(u_{k+½}) is the midpoint defect of the Euler step, O(τ).
        let grid = SpaceGrid::new(1, 15).unwrap();
        let ev = Evolution::new(ModelSpec::heat(), grid, 1).unwrap();
        let defect = |m: usize| {
            let traj = implicit_baseline(&ev, &sine(grid), 0.1, m).unwrap();
            (0..m)
                .map(|k| {
                    let h = residual(&ev, &traj, k).unwrap();
                    let mid = traj.midpoint(k).unwrap();
                    let d = ev.potential().gradient(mid.values());
                    let diff: Vec<f64> = h.values().iter().zip(&d).map(|(a, b)| a - b).collect();
                    ev.potential().dual_norm(&diff)
                })
                .fold(0.0, f64::max)
        };
        let ratio = defect(16) / defect(32);
        assert!(ratio > 1.7 && ratio < 2.3, "{ratio}");
    }

    #[test]
    fn compare_examples() {
        let grid = SpaceGrid::new(1, 5).unwrap();
        let x = Trajectory::constant(&sine(grid), 1.0, 3).unwrap();
        let neg = Trajectory::constant(&sine(grid).scaled(-1.0), 1.0, 3).unwrap();
        assert_eq!(compare(&x, &x).unwrap().relative_l2, 0.0);
        let c = compare(&x, &neg).unwrap();
        assert!((c.relative_l2 - 2.0).abs() < 1e-14);
        assert_eq!(c, compare(&neg, &x).unwrap());
        let other = Trajectory::constant(&sine(grid), 1.0, 4).unwrap();
        assert!(compare(&x, &other).is_err());
    }

    #[test]
    fn trivial_model_converges_immediately() {
        let grid = SpaceGrid::new(1, 7).unwrap();
        let ev = Evolution::new(ModelSpec::trivial(), grid, 1).unwrap();
        let init = Trajectory::constant(&Field::zeros(grid, 1), 0.1, 4).unwrap();
        let out = minimize(&ev, &init, &SolveOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.report.total, 0.0);
        let probe = uniqueness_probe(&ev, &Field::zeros(grid, 1), 0.1, 4, &SolveOptions::default(), 3).unwrap();
        assert_eq!(probe.max_discrepancy, 0.0);
    }

    #[test]
    fn small_heat_minimization_descends_and_is_deterministic() {
        let grid = SpaceGrid::new(1, 9).unwrap();
        let ev = Evolution::new(ModelSpec::heat(), grid, 1).unwrap();
        let opts = SolveOptions {
            seed: 5,
            ..SolveOptions::default()
        };
        let init = initial_trajectory(&sine(grid), 0.1, 8, &opts).unwrap();
        let a = minimize(&ev, &init, &opts).unwrap();
        assert!(a.converged);
        assert!(a.history.windows(2).all(|w| w[1].energy <= w[0].energy));
        assert_eq!(a.trajectory.state(0), init.state(0));
        let b = minimize(&ev, &init, &opts).unwrap();
        assert_eq!(a.history, b.history);
        assert!(eval_energy(&ev, &a.trajectory).unwrap().normalized <= opts.energy_tol);
    }

    #[test]
    fn options_are_validated() {
        let bad = SolveOptions {
            memory: 0,
            ..SolveOptions::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolveOptions {
            grad_tol: 0.0,
            ..SolveOptions::default()
        };
        assert!(bad.validate().is_err());
    }
}
