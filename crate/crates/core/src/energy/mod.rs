//! The space-time energy
//!
//! `J(u) = Σ_k τ [Ψ(λu_{k+½}) + Ψ*(H_k) − λ⟨u_{k+½}, H_k⟩]`,
//! `H_k = −(u_{k+1} − u_k)/τ − Λ_{t_{k+½}}(u_{k+½})`,
//!
//! its exact gradient with respect to the nodal values of `u_1 … u_M`, and
//! the zero-energy certificate. Each slice term is a Fenchel–Young gap, so
//! it is evaluated as the Bregman divergence of `Ψ` between `λu_{k+½}` and
//! `DΨ*(H_k)`, which keeps `J` accurate all the way down to zero.

mod potential;

pub use potential::{DualPoint, SpatialPotential};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{Field, Trajectory};
use crate::error::{Error, Result};
use crate::models::Evolution;

/// Guards `normalized` against `0/0` for trivial inputs.
pub const NORMALIZATION_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total: f64,
    pub term_psi: f64,
    pub term_conj: f64,
    pub term_pair: f64,
    pub residual_norm: f64,
    pub defect_norm: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub solved: bool,
    pub tol: f64,
    pub normalized: f64,
    pub defect_norm: f64,
    /// `‖u‖_{L^q(X)}` over interval midpoints; the defect is measured against it.
    pub scale: f64,
}

impl Certificate {
    pub fn from_report(report: &EnergyReport, scale: f64, tol: f64) -> Self {
        Self {
            solved: report.normalized <= tol && report.defect_norm <= tol * scale,
            tol,
            normalized: report.normalized,
            defect_norm: report.defect_norm,
            scale,
        }
    }
}

struct Slice {
    gap: f64,
    psi: f64,
    conj: f64,
    pair: f64,
    residual_pow: f64,
    defect_pow: f64,
    /// `τh^d [λ(DΨ(λm) − H) + DΛ(m)ᵀW]`, present when the gradient is wanted.
    coupling: Option<Vec<f64>>,
    defect: Vec<f64>,
}

fn conjugate_failure(slice: usize, err: Error) -> Error {
    let residual = match err {
        Error::NumericalFailure { residual, .. } => residual,
        _ => f64::NAN,
    };
    Error::ConjugateFailure { slice, residual }
}

fn slice_residual(ev: &Evolution, u0: &[f64], u1: &[f64], tau: f64, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mid: Vec<f64> = u0.iter().zip(u1).map(|(a, b)| 0.5 * (a + b)).collect();
    let lam = ev.lambda_op(&mid, t)?;
    let h = u0
        .iter()
        .zip(u1)
        .zip(&lam)
        .map(|((a, b), l)| -(b - a) / tau - l)
        .collect();
    Ok((mid, h))
}

fn eval_slice(ev: &Evolution, k: usize, u0: &[f64], u1: &[f64], tau: f64, t: f64, want_grad: bool) -> Result<Slice> {
    let pot = ev.potential();
    let w = ev.grid().cell_volume();
    let lambda = ev.lambda();
    let q = ev.model().density.exponent;
    let qs = ev.model().density.dual_exponent();

    let (mid, h) = slice_residual(ev, u0, u1, tau, t)?;
    let dual = pot.conjugate(&h).map_err(|e| conjugate_failure(k, e))?;
    let lm: Vec<f64> = mid.iter().map(|v| lambda * v).collect();
    let psi = if lambda == 0.0 { 0.0 } else { pot.value(&lm) };
    let pair = -lambda * w * crate::linalg::dot(&mid, &h);
    let gap = pot.bregman(&lm, &dual.argmax);
    let defect: Vec<f64> = lm.iter().zip(&dual.argmax).map(|(a, z)| a - z).collect();

    let coupling = if want_grad {
        let mut c = ev.lambda_adjoint(&mid, &defect, t);
        if lambda != 0.0 {
            let dpsi = pot.gradient(&lm);
            for ((ci, d), hi) in c.iter_mut().zip(&dpsi).zip(&h) {
                *ci += lambda * (d - hi);
            }
        }
        c.iter_mut().for_each(|v| *v *= tau * w);
        Some(c)
    } else {
        None
    };

    Ok(Slice {
        gap,
        psi,
        conj: dual.value,
        pair,
        residual_pow: pot.dual_norm(&h).powf(qs),
        defect_pow: pot.x_norm(&defect).powf(q),
        coupling,
        defect,
    })
}

/// Energy and, optionally, the gradient for states stored contiguously as
/// `u_0 | u_1 | … | u_M`. The gradient has the same layout with a zero
/// first block.
pub(crate) fn evaluate_flat(
    ev: &Evolution,
    flat: &[f64],
    times: &[f64],
    want_grad: bool,
) -> Result<(EnergyReport, Option<Vec<f64>>)> {
    let n = ev.dim();
    let m = times.len() - 1;
    debug_assert_eq!(flat.len(), n * (m + 1));
    let slices: Vec<Slice> = (0..m)
        .into_par_iter()
        .map(|k| {
            let tau = times[k + 1] - times[k];
            let t = 0.5 * (times[k] + times[k + 1]);
            eval_slice(ev, k, &flat[k * n..(k + 1) * n], &flat[(k + 1) * n..(k + 2) * n], tau, t, want_grad)
        })
        .collect::<Result<_>>()?;

    let q = ev.model().density.exponent;
    let qs = ev.model().density.dual_exponent();
    let (mut total, mut psi, mut conj, mut pair, mut res, mut def) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, s) in slices.iter().enumerate() {
        let tau = times[k + 1] - times[k];
        total += tau * s.gap;
        psi += tau * s.psi;
        conj += tau * s.conj;
        pair += tau * s.pair;
        res += tau * s.residual_pow;
        def += tau * s.defect_pow;
    }
    let report = EnergyReport {
        total,
        term_psi: psi,
        term_conj: conj,
        term_pair: pair,
        residual_norm: res.powf(1.0 / qs),
        defect_norm: def.powf(1.0 / q),
        normalized: total / (psi + conj + pair.abs() + NORMALIZATION_FLOOR),
    };

    let grad = want_grad.then(|| {
        let w = ev.grid().cell_volume();
        let mut g = vec![0.0; flat.len()];
        for (k, s) in slices.iter().enumerate() {
            let c = s.coupling.as_ref().expect("gradient requested");
            // Slice k touches u_k (skipped for k = 0) and u_{k+1}.
            if k > 0 {
                for ((gi, ci), wi) in g[k * n..(k + 1) * n].iter_mut().zip(c).zip(&s.defect) {
                    *gi += 0.5 * ci - w * wi;
                }
            }
            for ((gi, ci), wi) in g[(k + 1) * n..(k + 2) * n].iter_mut().zip(c).zip(&s.defect) {
                *gi += 0.5 * ci + w * wi;
            }
        }
        g
    });
    Ok((report, grad))
}

fn flatten(traj: &Trajectory) -> Vec<f64> {
    traj.states().iter().flat_map(|s| s.values().iter().copied()).collect()
}

fn check_traj(ev: &Evolution, traj: &Trajectory) -> Result<()> {
    if traj.grid() != ev.grid() || traj.components() != ev.components() {
        return Err(Error::ShapeMismatch("trajectory is not on the model grid".into()));
    }
    if !traj.initial_locked() {
        return Err(Error::InvalidInput("energy needs a trajectory with a locked initial state".into()));
    }
    Ok(())
}

/// `H_k`, the dual-space residual on interval `k`.
pub fn residual(ev: &Evolution, traj: &Trajectory, k: usize) -> Result<Field> {
    if traj.grid() != ev.grid() || traj.components() != ev.components() {
        return Err(Error::ShapeMismatch("trajectory is not on the model grid".into()));
    }
    if k >= traj.intervals() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: traj.intervals(),
        });
    }
    let t = traj.times();
    let (_, h) = slice_residual(
        ev,
        traj.state(k).values(),
        traj.state(k + 1).values(),
        t[k + 1] - t[k],
        0.5 * (t[k] + t[k + 1]),
    )?;
    Ok(traj.state(k).with_values(h))
}

pub fn eval_energy(ev: &Evolution, traj: &Trajectory) -> Result<EnergyReport> {
    check_traj(ev, traj)?;
    Ok(evaluate_flat(ev, &flatten(traj), traj.times(), false)?.0)
}

/// Partial derivatives of `J` with respect to the nodal values of every
/// state; the entry for `u_0` is zero since it is held fixed.
pub fn grad_energy(ev: &Evolution, traj: &Trajectory) -> Result<Vec<Field>> {
    Ok(energy_and_gradient(ev, traj)?.1)
}

pub fn energy_and_gradient(ev: &Evolution, traj: &Trajectory) -> Result<(EnergyReport, Vec<Field>)> {
    check_traj(ev, traj)?;
    let (report, grad) = evaluate_flat(ev, &flatten(traj), traj.times(), true)?;
    let grad = grad.expect("gradient requested");
    let fields = grad
        .chunks(ev.dim())
        .map(|c| traj.state(0).with_values(c.to_vec()))
        .collect();
    Ok((report, fields))
}

/// `(Σ_k τ ‖u_{k+½}‖_X^q)^{1/q}`.
pub fn trajectory_norm(ev: &Evolution, traj: &Trajectory) -> f64 {
    let q = ev.model().density.exponent;
    let t = traj.times();
    let s: f64 = (0..traj.intervals())
        .map(|k| {
            let mid: Vec<f64> = traj
                .state(k)
                .values()
                .iter()
                .zip(traj.state(k + 1).values())
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            (t[k + 1] - t[k]) * ev.potential().x_norm(&mid).powf(q)
        })
        .sum();
    s.powf(1.0 / q)
}

/// Solved iff `normalized ≤ tol` and `defect_norm ≤ tol·‖u‖`.
pub fn certificate(ev: &Evolution, traj: &Trajectory, tol: f64) -> Result<Certificate> {
    let report = eval_energy(ev, traj)?;
    Ok(Certificate::from_report(&report, trajectory_norm(ev, traj), tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_core::PowerDensity;
    use crate::discretization::SpaceGrid;
    use crate::linalg::{dot, BandMatrix};
    use crate::models::{Flux, ModelSpec, Reaction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_traj(grid: SpaceGrid, k: usize, m: usize, amp: f64, rng: &mut ChaCha8Rng) -> Trajectory {
        let w0 = Field::from_fn(grid, k, |x, c| (PI * x[0]).sin() * (1.0 + c as f64));
        let mut states = vec![w0];
        for _ in 0..m {
            let v = (0..grid.node_count() * k).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
            states.push(Field::from_values(grid, k, v).unwrap());
        }
        Trajectory::from_states(0.1, states).unwrap()
    }

    fn models() -> Vec<ModelSpec> {
        vec![
            ModelSpec::heat(),
            ModelSpec::burgers(10.0).unwrap(),
            ModelSpec::divergence_form(
                PowerDensity::new(1.0, 3.0, 0.5).unwrap(),
                Reaction::Linear { rate: -1.0, source: 0.5 },
                Flux::Sine { coeff: 0.3 },
            )
            .unwrap(),
        ]
    }

    /// Crank–Nicolson for the heat model, which is exactly the zero set of `J`.
    fn heat_midpoint(grid: SpaceGrid, m: usize, horizon: f64) -> Trajectory {
        let ev = Evolution::new(ModelSpec::heat(), grid, 1).unwrap();
        let tau = horizon / m as f64;
        let pot = ev.potential();
        let n = ev.dim();
        let zero = vec![0.0; n];
        let lhs = BandMatrix::from_operator(n, grid.bandwidth(1), |v, out| {
            pot.hessian_apply(&zero, v, out);
            out.iter_mut().zip(v).for_each(|(o, x)| *o = x + 0.5 * tau * *o);
        })
        .factor()
        .unwrap();
        let mut states = vec![Field::from_fn(grid, 1, |x, _| (PI * x[0]).sin())];
        for _ in 0..m {
            let u = states.last().unwrap().values().to_vec();
            let au = pot.gradient(&u);
            let rhs: Vec<f64> = u.iter().zip(&au).map(|(a, b)| a - 0.5 * tau * b).collect();
            states.push(Field::from_values(grid, 1, lhs.solve(&rhs)).unwrap());
        }
        Trajectory::from_states(horizon, states).unwrap()
    }

    #[test]
    fn zero_trajectory_has_zero_energy_and_gradient() {
        let grid = SpaceGrid::new(1, 7).unwrap();
        for m in [ModelSpec::trivial(), ModelSpec::burgers(10.0).unwrap()] {
            let ev = Evolution::new(m, grid, 1).unwrap();
            let traj = Trajectory::constant(&Field::zeros(grid, 1), 0.1, 4).unwrap();
            let (r, g) = energy_and_gradient(&ev, &traj).unwrap();
            assert_eq!(r.total, 0.0);
            assert_eq!(r.normalized, 0.0);
            assert!(g.iter().all(|f| f.max_abs() == 0.0));
        }
    }

    #[test]
    fn constant_heat_trajectory_has_zero_residual() {
        let grid = SpaceGrid::new(1, 9).unwrap();
        let ev = Evolution::new(ModelSpec::heat(), grid, 1).unwrap();
        let w0 = Field::from_fn(grid, 1, |x, _| x[0] * (1.0 - x[0]));
        let traj = Trajectory::constant(&w0, 0.1, 5).unwrap();
        for k in 0..5 {
            assert_eq!(residual(&ev, &traj, k).unwrap().max_abs(), 0.0);
        }
        assert!(residual(&ev, &traj, 5).is_err());
    }

    #[test]
    fn energy_is_nonnegative_and_terms_add_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in models() {
            for (d, n, k) in [(1, 9, 1), (2, 4, 2)] {
                let grid = SpaceGrid::new(d, n).unwrap();
                let ev = Evolution::new(m.clone(), grid, k).unwrap();
                for _ in 0..20 {
                    let amp = 10f64.powf(rng.gen_range(-2.0..1.0));
                    let traj = random_traj(grid, k, 4, amp, &mut rng);
                    let r = eval_energy(&ev, &traj).unwrap();
                    assert!(r.total >= -1e-9, "{}", r.total);
                    let scale = r.term_psi + r.term_conj + r.term_pair.abs();
                    let sum = r.term_psi + r.term_conj + r.term_pair;
                    assert!((r.total - sum).abs() <= 1e-10 * scale, "{} vs {}", r.total, sum);
                }
            }
        }
    }

    #[test]
    fn pairing_term_matches_the_energy_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = SpaceGrid::new(1, 11).unwrap();
        for m in models() {
            let ev = Evolution::new(m, grid, 1).unwrap();
            let traj = random_traj(grid, 1, 6, 1.0, &mut rng);
            let r = eval_energy(&ev, &traj).unwrap();
            let w = grid.cell_volume();
            let last = traj.state(6).values();
            let first = traj.state(0).values();
            let mut expected = 0.5 * w * (dot(last, last) - dot(first, first));
            for k in 0..6 {
                let mid = traj.midpoint(k).unwrap();
                let lam = ev.lambda_op(mid.values(), traj.mid_time(k)).unwrap();
                expected += traj.tau() * w * dot(mid.values(), &lam);
            }
            assert!((r.term_pair - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for m in models() {
            for (d, n, k) in [(1, 8, 1), (2, 3, 2)] {
                let grid = SpaceGrid::new(d, n).unwrap();
                let ev = Evolution::new(m.clone(), grid, k).unwrap();
                let traj = random_traj(grid, k, 3, 1.0, &mut rng);
                let g = grad_energy(&ev, &traj).unwrap();
                assert_eq!(g[0].max_abs(), 0.0);
                let base = flatten(&traj);
                let gflat: Vec<f64> = g.iter().flat_map(|f| f.values().to_vec()).collect();
                for _ in 0..5 {
                    let mut dir: Vec<f64> = (0..base.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    dir[..ev.dim()].iter_mut().for_each(|v| *v = 0.0);
                    let exact = dot(&gflat, &dir);
                    let fd = |s: f64| {
                        let e = |sign: f64| {
                            let p: Vec<f64> = base.iter().zip(&dir).map(|(a, b)| a + sign * s * b).collect();
                            evaluate_flat(&ev, &p, traj.times(), false).unwrap().0.total
                        };
                        (e(1.0) - e(-1.0)) / (2.0 * s)
                    };
                    let best = [1e-4, 1e-5, 1e-6, 1e-7]
                        .iter()
                        .map(|s| (fd(*s) - exact).abs() / exact.abs().max(1e-12))
                        .fold(f64::INFINITY, f64::min);
                    assert!(best <= 1e-5, "{}: relative error {best}", m.name);
                }
            }
        }
    }

    #[test]
    fn midpoint_solution_is_a_critical_point_with_zero_energy() {
        let grid = SpaceGrid::new(1, 15).unwrap();
        let traj = heat_midpoint(grid, 16, 0.1);
        let ev = Evolution::new(ModelSpec::heat(), grid, 1).unwrap();
        let (r, g) = energy_and_gradient(&ev, &traj).unwrap();
        let scale: f64 = traj.states().iter().map(|s| s.h_norm()).fold(0.0, f64::max);
        assert!(r.normalized < 1e-24, "{}", r.normalized);
        assert!(r.defect_norm < 1e-12);
        let gmax = g.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        assert!(gmax <= 1e-8 * scale, "{gmax}");
        assert!(certificate(&ev, &traj, 1e-6).unwrap().solved);
    }

    #[test]
    fn zero_trajectory_with_nonzero_datum_is_not_certified() {
        let grid = SpaceGrid::new(1, 15).unwrap();
        let ev = Evolution::new(ModelSpec::heat(), grid, 1).unwrap();
        let w0 = Field::from_fn(grid, 1, |x, _| (PI * x[0]).sin());
        let mut states = vec![Field::zeros(grid, 1); 9];
        states[0] = w0;
        let traj = Trajectory::from_states(0.1, states).unwrap();
        let c = certificate(&ev, &traj, 1e-6).unwrap();
        assert!(!c.solved);
        assert!(c.normalized > 1e-2);
    }

    #[test]
    fn lambda_zero_keeps_only_the_conjugate_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let grid = SpaceGrid::new(1, 6).unwrap();
        let ev = Evolution::new(ModelSpec::burgers(10.0).unwrap().with_lambda(0).unwrap(), grid, 1).unwrap();
        let traj = random_traj(grid, 1, 3, 1.0, &mut rng);
        let r = eval_energy(&ev, &traj).unwrap();
        assert_eq!(r.term_psi, 0.0);
        assert_eq!(r.term_pair, 0.0);
        assert!((r.total - r.term_conj).abs() <= 1e-12 * r.term_conj);
    }

    #[test]
    fn report_serializes_flat() {
        let r = EnergyReport {
            total: 1.0,
            term_psi: 2.0,
            term_conj: 3.0,
            term_pair: -4.0,
            residual_norm: 5.0,
            defect_norm: 6.0,
            normalized: 0.1,
        };
        let v = serde_json::to_value(r).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        for k in [
            "total",
            "term_psi",
            "term_conj",
            "term_pair",
            "residual_norm",
            "defect_norm",
            "normalized",
        ] {
            assert!(keys.contains(&k));
        }
        assert_eq!(keys.len(), 7);
    }
}
