use crate::discretization::{Field, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::BandMatrix;
use crate::models::Evolution;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 50;
const MAX_HALVINGS: usize = 30;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `u − prev + τ [Λ_t(u) + λ DΨ(λu)]`.
pub(crate) fn step_residual(ev: &Evolution, prev: &[f64], u: &[f64], tau: f64, t: f64) -> Result<Vec<f64>> {
    let lambda = ev.lambda();
    let mut r = ev.lambda_op(u, t)?;
    if lambda != 0.0 {
        let lu: Vec<f64> = u.iter().map(|v| lambda * v).collect();
        let g = ev.potential().gradient(&lu);
        r.iter_mut().zip(&g).for_each(|(ri, gi)| *ri += lambda * gi);
    }
    for ((ri, ui), pi) in r.iter_mut().zip(u).zip(prev) {
        *ri = ui - pi + tau * *ri;
    }
    Ok(r)
}

fn step_jacobian(ev: &Evolution, u: &[f64], tau: f64, t: f64) -> BandMatrix {
    let lambda = ev.lambda();
    let lu: Vec<f64> = u.iter().map(|v| lambda * v).collect();
    let mut hv = vec![0.0; u.len()];
    let mut dl = vec![0.0; u.len()];
    BandMatrix::from_operator(ev.dim(), ev.grid().bandwidth(ev.components()), |v, out| {
        ev.lambda_directional_into(u, v, t, &mut dl);
        if lambda != 0.0 {
            ev.potential().hessian_apply(&lu, v, &mut hv);
        } else {
            hv.iter_mut().for_each(|h| *h = 0.0);
        }
        for i in 0..out.len() {
            out[i] = v[i] + tau * (dl[i] + lambda * lambda * hv[i]);
        }
    })
}

fn implicit_step(ev: &Evolution, step: usize, prev: &[f64], tau: f64, t: f64) -> Result<Vec<f64>> {
    let tol = NEWTON_TOL * (1.0 + max_abs(prev));
    let mut u = prev.to_vec();
    let mut r = step_residual(ev, prev, &u, tau, t)?;
    let mut res = max_abs(&r);
    for _ in 0..NEWTON_MAX_ITERS {
        if res <= tol {
            return Ok(u);
        }
        let lu = step_jacobian(ev, &u, tau, t)
            .factor()
            .map_err(|_| Error::StepFailure { step, residual: res })?;
        let mut delta = r.clone();
        lu.solve_in_place(&mut delta);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a - alpha * d).collect();
            if let Ok(rt) = step_residual(ev, prev, &trial, tau, t) {
                let rn = max_abs(&rt);
                if rn < res {
                    u = trial;
                    r = rt;
                    res = rn;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No decrease at all: either converged to round-off or stuck.
            if res <= 1e3 * tol {
                return Ok(u);
            }
            return Err(Error::StepFailure { step, residual: res });
        }
    }
    if res <= tol {
        Ok(u)
    } else {
        Err(Error::StepFailure { step, residual: res })
    }
}

/// Implicit Euler: `(u_{k+1} − u_k)/τ + Λ_{t_{k+1}}(u_{k+1}) + λ DΨ(λu_{k+1}) = 0`,
/// each step by damped Newton with a banded Jacobian.
pub fn implicit_baseline(ev: &Evolution, w0: &Field, horizon: f64, intervals: usize) -> Result<Trajectory> {
    if w0.grid() != ev.grid() || w0.components() != ev.components() {
        return Err(Error::ShapeMismatch("initial datum is not on the model grid".into()));
    }
    let mut traj = Trajectory::constant(w0, horizon, intervals)?;
    let times = traj.times().to_vec();
    let mut prev = w0.values().to_vec();
    for k in 0..intervals {
        let tau = times[k + 1] - times[k];
        let next = implicit_step(ev, k + 1, &prev, tau, times[k + 1])?;
        traj.set_state(k + 1, w0.with_values(next.clone()))?;
        prev = next;
    }
    Ok(traj)
}
