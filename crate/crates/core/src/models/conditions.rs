//! Sampled checks of the structural hypotheses on `Ψ` and `Λ_t`.
//!
//! Every inequality quantifies over all of `X`; here each one is evaluated
//! on random `(x, h, t)` draws with the model's constants held fixed, and
//! the worst normalized margin is reported together with failing samples.
//! The functions `g, ĝ, μ, μ̂, μ̄` are taken constant (`μ = μ̂ = 1`).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::evolution::Evolution;
use crate::error::{Error, Result};
use crate::linalg::dot;

pub const PASS_THRESHOLD: f64 = -1e-9;
const MAX_WITNESSES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Growth,
    DerivGrowth,
    Monotonicity,
    Positivity,
    UniformConvexity,
    Lipschitz,
}

impl Condition {
    pub const ALL: [Condition; 6] = [
        Condition::Growth,
        Condition::DerivGrowth,
        Condition::Monotonicity,
        Condition::Positivity,
        Condition::UniformConvexity,
        Condition::Lipschitz,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Condition::Growth => "growth",
            Condition::DerivGrowth => "deriv_growth",
            Condition::Monotonicity => "monotonicity",
            Condition::Positivity => "positivity",
            Condition::UniformConvexity => "uniform_convexity",
            Condition::Lipschitz => "lipschitz",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownCondition(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub samples: usize,
    pub seed: u64,
    /// Times are drawn uniformly from `[0, horizon]`.
    pub horizon: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub margin: f64,
    pub x: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition_name: String,
    pub samples: usize,
    pub worst_margin: f64,
    pub witnesses: Vec<Witness>,
    pub verdict: Verdict,
    pub constants: BTreeMap<String, f64>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Constants entering the hypothesis inequalities, derived from the model's
/// Lipschitz data and grid norm equivalences unless overridden.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisConstants {
    /// `(1/C₀)‖x‖^q − C₀ ≤ Ψ(x) ≤ C₀‖x‖^q + C₀`.
    pub growth_c0: f64,
    /// `‖DΛ_t(x)‖ ≤ g (‖x‖^{q−2} + 1)`.
    pub deriv_g: f64,
    /// Monotonicity lower bound `−ĝ (‖x‖^q + 1) ‖h‖²_H`.
    pub monotone_g_hat: f64,
    /// `Ψ(x) + ⟨x, Λ_t(x)⟩ ≥ (1/C̃)‖x‖^q − μ̄ (‖x‖²_H + 1)`.
    pub positivity_c_tilde: f64,
    pub positivity_mu_bar: f64,
    /// `⟨h, DΨ(x+h) − DΨ(x)⟩ ≥ (1/C₀)(‖x‖^{q−2} + 1)‖h‖²_X` for `‖x‖_X ≤ radius`.
    pub convexity_c0: f64,
    pub radius: f64,
}

impl HypothesisConstants {
    pub fn fit(ev: &Evolution) -> Self {
        let m = ev.model();
        let grid = ev.grid();
        let dens = m.density;
        let (a, q, eps) = (dens.coefficient, dens.exponent, dens.regularizer);
        let d = grid.dimension() as f64;
        let c_p = grid.poincare_constant();
        let inv = 2.0 * d.sqrt() / grid.spacing();
        let l_theta = m.reaction.lipschitz();
        let l_flux = d.sqrt() * (m.flux.lipschitz() + m.scalar_flux.lipschitz());
        let (z_theta, z_xi) = zero_state_norms(ev);
        let lambda = m.lambda();

        let lower = if dens.is_quadratic() { 0.5 * (a + eps) } else { a / q };
        let growth_c0 = (1.0 / lower).max(a / q + 0.5 * eps).max(1.0);

        let deriv_g = (l_flux + l_theta * c_p) * c_p;

        let modulus = dens.convexity_modulus();
        let monotone_g_hat = if lambda == 1.0 && modulus > 0.0 {
            l_flux * l_flux / (4.0 * modulus) + l_theta
        } else {
            l_theta + l_flux * inv
        };

        let c2 = dens.quadratic_floor();
        let (inv_c_tilde, mu_bar) = if c2 > 0.0 {
            let inv_c = if dens.is_quadratic() { 0.25 * c2 } else { a / q };
            let mu = l_flux * l_flux / (2.0 * c2) + l_theta + 0.5 * z_theta + z_xi * z_xi / c2;
            (inv_c, mu)
        } else {
            (a / q, l_flux * inv + l_theta + 0.5 * z_theta + 0.5 * z_xi * inv)
        };

        let radius = m.radius;
        let inv_convexity = if dens.is_quadratic() {
            0.5 * (a + eps)
        } else {
            eps * grid.cell_volume().powf(1.0 - 2.0 / q) / (radius.powf(q - 2.0) + 1.0)
        };

        let o = &m.overrides;
        Self {
            growth_c0: o.growth_c0.unwrap_or(growth_c0),
            deriv_g: o.deriv_g.unwrap_or(deriv_g),
            monotone_g_hat: o.monotone_g_hat.unwrap_or(monotone_g_hat),
            positivity_c_tilde: o.positivity_c_tilde.unwrap_or(1.0 / inv_c_tilde),
            positivity_mu_bar: o.positivity_mu_bar.unwrap_or(mu_bar),
            convexity_c0: o.convexity_c0.unwrap_or(1.0 / inv_convexity),
            radius,
        }
    }
}

/// `max_t ‖Θ(0,·,t)‖_H` and `max_t ‖(Ξ − F)(0,·,t)‖_{L²}` over a time grid on `[0, 1]`.
fn zero_state_norms(ev: &Evolution) -> (f64, f64) {
    let grid = ev.grid();
    let m = ev.model();
    let w = grid.cell_volume();
    let mut zt: f64 = 0.0;
    let mut zx: f64 = 0.0;
    for j in 0..=64 {
        let t = j as f64 / 64.0;
        let mut st = 0.0;
        for node in 0..grid.node_count() {
            let x = grid.node_coords(node);
            let v = m.reaction.value(0.0, x, grid.dimension(), t);
            st += ev.components() as f64 * v * v;
        }
        zt = zt.max((w * st).sqrt());
        let mut sx = 0.0;
        for cell in 0..grid.cell_count() {
            for r in 0..grid.dimension() {
                let x = grid.edge_midpoint(cell, r);
                let v = m.flux.value(0.0, x, t) - m.scalar_flux.value(0.0);
                sx += ev.components() as f64 * v * v;
            }
        }
        zx = zx.max((w * sx).sqrt());
    }
    (zt, zx)
}

struct Sample {
    margin: f64,
    t: f64,
    x: Vec<f64>,
    h: Vec<f64>,
}

fn random_shape(rng: &mut ChaCha8Rng, ev: &Evolution, kind: usize) -> Vec<f64> {
    let n = ev.dim();
    let grid = ev.grid();
    let k = ev.components();
    match kind % 4 {
        0 => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        1 => {
            let modes: Vec<(f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(1..=4) as f64,
                        rng.gen_range(1..=4) as f64,
                    )
                })
                .collect();
            let mut v = vec![0.0; n];
            for node in 0..grid.node_count() {
                let x = grid.node_coords(node);
                for c in 0..k {
                    v[node * k + c] = modes
                        .iter()
                        .map(|(amp, a, b)| {
                            let py = if grid.dimension() == 2 {
                                (b * std::f64::consts::PI * x[1]).sin()
                            } else {
                                1.0
                            };
                            amp * (a * std::f64::consts::PI * x[0]).sin() * py * (1.0 + c as f64)
                        })
                        .sum();
                }
            }
            v
        }
        2 => {
            let mut v = vec![0.0; n];
            v[rng.gen_range(0..n)] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            v
        }
        _ => {
            let base = random_shape(rng, ev, 1);
            base.into_iter().map(|b| b * rng.gen_range(0.0..1.0)).collect()
        }
    }
}

/// Draws a field of random shape rescaled to `‖·‖_X = s`, with `s`
/// log-uniform in `[10⁻³·radius, radius]`.
fn random_field(rng: &mut ChaCha8Rng, ev: &Evolution, radius: f64) -> Vec<f64> {
    let kind = rng.gen_range(0..4);
    let mut v = random_shape(rng, ev, kind);
    let nrm = ev.potential().x_norm(&v);
    if nrm == 0.0 {
        return v;
    }
    let s = radius * 10f64.powf(-3.0 * rng.gen_range(0.0..1.0));
    v.iter_mut().for_each(|x| *x *= s / nrm);
    v
}

/// Evaluates one named hypothesis on sampled inputs.
pub fn check_condition(ev: &Evolution, condition: Condition, sampler: &SamplerConfig) -> ConditionReport {
    let consts = HypothesisConstants::fit(ev);
    let samples: Vec<Sample> = (0..sampler.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
            rng.set_stream(i as u64);
            evaluate_sample(ev, condition, &consts, sampler, &mut rng)
        })
        .collect();

    let mut worst = f64::INFINITY;
    let mut failing: Vec<&Sample> = Vec::new();
    for s in &samples {
        // NaN margins count as failures.
        let m = if s.margin.is_nan() { f64::NEG_INFINITY } else { s.margin };
        worst = worst.min(m);
        if m < PASS_THRESHOLD {
            failing.push(s);
        }
    }
    failing.sort_by(|a, b| a.margin.total_cmp(&b.margin));
    let witnesses = failing
        .into_iter()
        .take(MAX_WITNESSES)
        .map(|s| Witness {
            t: s.t,
            margin: s.margin,
            x: s.x.clone(),
            h: s.h.clone(),
        })
        .collect();
    if samples.is_empty() {
        worst = 0.0;
    }
    ConditionReport {
        condition_name: condition.name().to_string(),
        samples: sampler.samples,
        worst_margin: worst,
        witnesses,
        verdict: if worst >= PASS_THRESHOLD { Verdict::Pass } else { Verdict::Fail },
        constants: constants_for(condition, &consts),
    }
}

/// Parses `name` and runs [`check_condition`].
pub fn check_named_condition(ev: &Evolution, name: &str, sampler: &SamplerConfig) -> Result<ConditionReport> {
    Ok(check_condition(ev, name.parse()?, sampler))
}

fn constants_for(condition: Condition, c: &HypothesisConstants) -> BTreeMap<String, f64> {
    let pairs: Vec<(&str, f64)> = match condition {
        Condition::Growth => vec![("C0", c.growth_c0)],
        Condition::DerivGrowth => vec![("g", c.deriv_g), ("mu", 1.0)],
        Condition::Monotonicity => vec![("g_hat", c.monotone_g_hat), ("mu_hat", 1.0)],
        Condition::Positivity => vec![("C_tilde", c.positivity_c_tilde), ("mu_bar", c.positivity_mu_bar)],
        Condition::UniformConvexity => vec![("C0", c.convexity_c0), ("radius", c.radius)],
        Condition::Lipschitz => vec![],
    };
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn evaluate_sample(
    ev: &Evolution,
    condition: Condition,
    c: &HypothesisConstants,
    sampler: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Sample {
    let pot = ev.potential();
    let w = ev.grid().cell_volume();
    let q = ev.model().density.exponent;
    let lambda = ev.lambda();
    let t = rng.gen_range(0.0..=sampler.horizon);
    if condition == Condition::Lipschitz {
        return lipschitz_sample(ev, rng, t);
    }
    let x = random_field(rng, ev, c.radius);
    let h = random_field(rng, ev, c.radius);
    let xn = pot.x_norm(&x);
    let margin = match condition {
        Condition::Growth => {
            let psi = pot.value(&x);
            let xq = xn.powf(q);
            let lo = psi - (xq / c.growth_c0 - c.growth_c0);
            let hi = c.growth_c0 * xq + c.growth_c0 - psi;
            lo.min(hi) / (1.0 + xq)
        }
        Condition::DerivGrowth => {
            let hn = pot.x_norm(&h);
            let dl = ev.lambda_directional(&x, &h, t);
            let lhs = pot.dual_norm(&dl) / hn;
            let rhs = c.deriv_g * (xn.powf(q - 2.0) + 1.0);
            (rhs - lhs) / (1.0 + rhs)
        }
        Condition::Monotonicity => {
            let lx: Vec<f64> = x.iter().map(|v| lambda * v).collect();
            let shifted: Vec<f64> = lx.iter().zip(&h).map(|(a, b)| a + b).collect();
            let mut inner: Vec<f64> = if lambda == 0.0 {
                vec![0.0; x.len()]
            } else {
                pot.gradient(&shifted)
                    .iter()
                    .zip(pot.gradient(&lx))
                    .map(|(a, b)| lambda * (a - b))
                    .collect()
            };
            let dl = ev.lambda_directional(&x, &h, t);
            inner.iter_mut().zip(&dl).for_each(|(a, b)| *a += b);
            let lhs = w * dot(&h, &inner);
            let hh = w * dot(&h, &h);
            let rhs = -c.monotone_g_hat * (xn.powf(q) + 1.0) * hh;
            (lhs - rhs) / hh
        }
        Condition::Positivity => {
            let lam = ev.lambda_op(&x, t).unwrap_or_else(|_| vec![f64::NAN; x.len()]);
            let lhs = pot.value(&x) + w * dot(&x, &lam);
            let xh = w * dot(&x, &x);
            let xq = xn.powf(q);
            let rhs = xq / c.positivity_c_tilde - c.positivity_mu_bar * (xh + 1.0);
            (lhs - rhs) / (1.0 + xq + xh)
        }
        Condition::UniformConvexity => {
            let shifted: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
            let diff: Vec<f64> = pot
                .gradient(&shifted)
                .iter()
                .zip(pot.gradient(&x))
                .map(|(a, b)| a - b)
                .collect();
            let lhs = w * dot(&h, &diff);
            let hn2 = pot.x_norm(&h).powi(2);
            let rhs = (xn.powf(q - 2.0) + 1.0) * hn2 / c.convexity_c0;
            (lhs - rhs) / hn2
        }
        Condition::Lipschitz => unreachable!(),
    };
    Sample { margin, t, x, h }
}

/// Pointwise Lipschitz bounds of `Θ`, `Ξ` and `F` on random pairs.
fn lipschitz_sample(ev: &Evolution, rng: &mut ChaCha8Rng, t: f64) -> Sample {
    let m = ev.model();
    let dim = ev.grid().dimension();
    let span = 2.0 * match m.scalar_flux {
        super::ScalarFlux::TruncatedBurgers { u_max } => u_max.max(m.radius),
        super::ScalarFlux::None => m.radius,
    };
    let b1 = rng.gen_range(-span..span);
    let b2 = rng.gen_range(-span..span);
    let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
    let db = (b2 - b1).abs().max(f64::MIN_POSITIVE);
    let mut margin: f64 = 0.0;
    if m.reaction.is_active() {
        let dv = (m.reaction.value(b2, x, dim, t) - m.reaction.value(b1, x, dim, t)).abs();
        margin = margin.min((m.reaction.lipschitz() * db - dv) / db);
    }
    if m.flux.is_active() {
        let dv = (m.flux.value(b2, x, t) - m.flux.value(b1, x, t)).abs();
        margin = margin.min((m.flux.lipschitz() * db - dv) / db);
    }
    if m.scalar_flux.is_active() {
        let dv = (m.scalar_flux.value(b2) - m.scalar_flux.value(b1)).abs();
        margin = margin.min((m.scalar_flux.lipschitz() * db - dv) / db);
    }
    Sample {
        margin,
        t,
        x: vec![b1],
        h: vec![b2 - b1],
    }
}
