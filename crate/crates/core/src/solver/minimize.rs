use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::SolveOptions;
use crate::discretization::Trajectory;
use crate::energy::{evaluate_flat, EnergyReport};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::models::Evolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub energy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub trajectory: Trajectory,
    pub report: EnergyReport,
    pub iterations: usize,
    pub converged: bool,
    /// Entry `i` describes the iterate after `i` accepted steps.
    pub history: Vec<HistoryEntry>,
}

impl SolveOutcome {
    pub fn grad_norm(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |h| h.grad_norm)
    }
}

/// Free unknowns `u_1 … u_M` with the fixed `u_0` kept alongside.
struct Problem<'a> {
    ev: &'a Evolution,
    times: &'a [f64],
    head: Vec<f64>,
    /// `τ h^d`, the weight turning partial derivatives into an `L²(H)` gradient.
    weight: f64,
}

struct Point {
    x: Vec<f64>,
    report: EnergyReport,
    /// Partial derivatives with respect to the free values.
    grad: Vec<f64>,
}

impl Problem<'_> {
    fn eval(&self, x: &[f64], want_grad: bool) -> Result<(EnergyReport, Option<Vec<f64>>)> {
        let mut flat = Vec::with_capacity(self.head.len() + x.len());
        flat.extend_from_slice(&self.head);
        flat.extend_from_slice(x);
        let (report, grad) = evaluate_flat(self.ev, &flat, self.times, want_grad)?;
        Ok((report, grad.map(|g| g[self.head.len()..].to_vec())))
    }

    fn point(&self, x: Vec<f64>) -> Result<Point> {
        let (report, grad) = self.eval(&x, true)?;
        Ok(Point {
            x,
            report,
            grad: grad.expect("gradient requested"),
        })
    }

    fn grad_norm(&self, g: &[f64]) -> f64 {
        (dot(g, g) / self.weight).sqrt()
    }
}

/// Two-loop recursion; returns `−H g` with `H` the inverse-Hessian estimate.
fn lbfgs_direction(memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64], fallback: f64) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let gamma = memory
        .back()
        .map_or(fallback, |(s, y, _)| dot(s, y) / dot(y, y));
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `J` over `u_1 … u_M` with `u_0` held at the initial datum.
pub fn minimize(ev: &Evolution, init: &Trajectory, opts: &SolveOptions) -> Result<SolveOutcome> {
    opts.validate()?;
    if !init.initial_locked() {
        return Err(Error::InvalidInput("initial trajectory must lock u_0".into()));
    }
    if init.grid() != ev.grid() || init.components() != ev.components() {
        return Err(Error::ShapeMismatch("initial trajectory is not on the model grid".into()));
    }
    let n = ev.dim();
    let problem = Problem {
        ev,
        times: init.times(),
        head: init.state(0).values().to_vec(),
        weight: init.tau() * ev.grid().cell_volume(),
    };
    let ls = opts.line_search;

    let mut cur = problem.point(init.free_values())?;
    let mut history = vec![HistoryEntry {
        energy: cur.report.total,
        grad_norm: problem.grad_norm(&cur.grad),
    }];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut last_step: f64 = 1.0;
    let done = |p: &Point, gn: f64| gn <= opts.grad_tol || p.report.normalized <= opts.energy_tol;

    let mut iterations = 0;
    let mut converged = done(&cur, history[0].grad_norm);
    while !converged && iterations < opts.max_iters {
        let mut accepted = None;
        // A failed quasi-Newton search is retried once along −g.
        for attempt in 0..2 {
            let steepest = !opts.use_lbfgs || attempt == 1 || memory.is_empty();
            let dir: Vec<f64> = if steepest {
                cur.grad.iter().map(|g| -g / problem.weight).collect()
            } else {
                lbfgs_direction(&memory, &cur.grad, 1.0 / problem.weight)
            };
            let slope = dot(&cur.grad, &dir);
            if !(slope < 0.0) {
                memory.clear();
                continue;
            }
            let mut alpha = if steepest { (2.0 * last_step).min(1.0) } else { 1.0 };
            for _ in 0..ls.max_trials {
                let trial: Vec<f64> = cur.x.iter().zip(&dir).map(|(x, d)| x + alpha * d).collect();
                let energy = problem.eval(&trial, false).map(|(r, _)| r.total);
                if let Ok(e) = energy {
                    if e <= cur.report.total + ls.c1 * alpha * slope {
                        accepted = Some((trial, alpha, steepest));
                        break;
                    }
                }
                alpha *= ls.backtrack;
            }
            if accepted.is_some() {
                break;
            }
            memory.clear();
        }
        let Some((x, alpha, steepest)) = accepted else {
            return Err(Error::Stagnation {
                iterations,
                energy: cur.report.total,
                last: Box::new(init.with_free_values(&cur.x)),
            });
        };
        if steepest {
            last_step = alpha;
        }
        let next = problem.point(x)?;
        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if opts.use_lbfgs && sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        cur = next;
        iterations += 1;
        let gn = problem.grad_norm(&cur.grad);
        history.push(HistoryEntry {
            energy: cur.report.total,
            grad_norm: gn,
        });
        converged = done(&cur, gn);
    }
    debug_assert_eq!(cur.x.len() % n, 0);
    Ok(SolveOutcome {
        trajectory: init.with_free_values(&cur.x),
        report: cur.report,
        iterations,
        converged,
        history,
    })
}
