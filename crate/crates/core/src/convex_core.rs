//! Radial convex densities `ψ(ξ) = (a/q)|ξ|^q + (ε/2)|ξ|²`, their gradients,
//! Legendre–Fenchel conjugates and the Fenchel–Young gap.
//!
//! The conjugate of a radial density is radial, so `ψ*(y)` reduces to the
//! scalar equation `a r^{q-1} + ε r = |y|` for the radius of the maximizer.
//! That equation has a unique root because its left side is strictly
//! increasing in `r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RADIAL_MAX_ITERS: usize = 200;
const RADIAL_TOL: f64 = 1e-12;

/// Pointwise integrand of the spatial energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerDensity {
    /// Scale `a > 0`.
    pub coefficient: f64,
    /// Exponent `q ≥ 2`.
    pub exponent: f64,
    /// Quadratic regularizer `ε ≥ 0`.
    pub regularizer: f64,
}

/// Value and maximizer of `sup_z { z·y − ψ(z) }`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateValue {
    pub value: f64,
    /// The maximizing `z`, which is also `Dψ*(y)`.
    pub argmax: Vec<f64>,
    pub newton_iters: usize,
}

impl PowerDensity {
    pub fn new(coefficient: f64, exponent: f64, regularizer: f64) -> Result<Self> {
        if !(coefficient.is_finite() && coefficient > 0.0) {
            return Err(Error::InvalidInput(format!(
                "density coefficient must be positive, got {coefficient}"
            )));
        }
        if !(exponent.is_finite() && exponent >= 2.0) {
            return Err(Error::InvalidInput(format!(
                "density exponent must be >= 2, got {exponent}"
            )));
        }
        if !(regularizer.is_finite() && regularizer >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "density regularizer must be >= 0, got {regularizer}"
            )));
        }
        Ok(Self {
            coefficient,
            exponent,
            regularizer,
        })
    }

    /// `|ξ|²/2`.
    pub fn quadratic() -> Self {
        Self {
            coefficient: 1.0,
            exponent: 2.0,
            regularizer: 0.0,
        }
    }

    pub fn is_quadratic(&self) -> bool {
        self.exponent == 2.0
    }

    /// Dual exponent `q* = q/(q−1)`.
    pub fn dual_exponent(&self) -> f64 {
        self.exponent / (self.exponent - 1.0)
    }

    /// Coefficient `c` in the lower bound `ψ(ξ) ≥ c|ξ|²`.
    pub fn quadratic_floor(&self) -> f64 {
        if self.is_quadratic() {
            0.5 * (self.coefficient + self.regularizer)
        } else {
            0.5 * self.regularizer
        }
    }

    /// Modulus `m` with `(Dψ(ξ+η) − Dψ(ξ))·η ≥ m|η|²` for all `ξ, η`.
    pub fn convexity_modulus(&self) -> f64 {
        if self.is_quadratic() {
            self.coefficient + self.regularizer
        } else {
            self.regularizer
        }
    }

    /// Constant `C` such that `(1/C)|y|^{q*} − C ≤ ψ*(y) ≤ C|y|^{q*} + C`.
    pub fn conjugate_growth_constant(&self) -> f64 {
        let q = self.exponent;
        let qs = self.dual_exponent();
        let upper = self.coefficient.powf(-1.0 / (q - 1.0)) / qs;
        // ψ(r) ≤ ((a + qε/2)/q) r^q + ε/2 because r² ≤ r^q + 1.
        let b = self.coefficient + 0.5 * q * self.regularizer;
        let lower = b.powf(-1.0 / (q - 1.0)) / qs;
        upper.max(1.0 / lower).max(0.5 * self.regularizer).max(1.0)
    }

    /// Radial profile `ψ(r)` for `r ≥ 0`.
    pub fn radial(&self, r: f64) -> f64 {
        self.coefficient / self.exponent * r.powf(self.exponent) + 0.5 * self.regularizer * r * r
    }

    /// `r ↦ a r^{q−1} + ε r`, the magnitude of the gradient at radius `r`.
    pub fn radial_slope(&self, r: f64) -> f64 {
        self.coefficient * r.powf(self.exponent - 1.0) + self.regularizer * r
    }

    fn radial_slope_derivative(&self, r: f64) -> f64 {
        let q = self.exponent;
        let power = if q == 2.0 { 1.0 } else { r.powf(q - 2.0) };
        self.coefficient * (q - 1.0) * power + self.regularizer
    }

    /// Solves `a r^{q−1} + ε r = s` for `r ≥ 0`. Returns `(r, iterations)`.
    pub fn invert_radial_slope(&self, s: f64) -> Result<(f64, usize)> {
        if s == 0.0 {
            return Ok((0.0, 0));
        }
        let q = self.exponent;
        let a = self.coefficient;
        if q == 2.0 {
            return Ok((s / (a + self.regularizer), 1));
        }
        let root = 1.0 / (q - 1.0);
        let mut lo = 0.0;
        let mut hi = s.max(1.0).powf(root) * a.powf(-root) + s / self.regularizer.max(1.0);
        let mut r = (s / a).powf(root).min(hi);
        if self.regularizer > 0.0 {
            r = r.min(s / self.regularizer);
        }
        for iter in 1..=RADIAL_MAX_ITERS {
            let f = self.radial_slope(r) - s;
            if f == 0.0 {
                return Ok((r, iter));
            }
            if f > 0.0 {
                hi = r;
            } else {
                lo = r;
            }
            let df = self.radial_slope_derivative(r);
            let mut next = r - f / df;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let done = (next - r).abs() <= 4.0 * f64::EPSILON * r.abs();
            r = next;
            if done {
                let res = (self.radial_slope(r) - s).abs();
                if res <= RADIAL_TOL * s {
                    return Ok((r, iter));
                }
                break;
            }
        }
        let res = (self.radial_slope(r) - s).abs();
        if res <= RADIAL_TOL * s {
            Ok((r, RADIAL_MAX_ITERS))
        } else {
            Err(Error::NumericalFailure {
                what: "radial conjugate Newton".into(),
                residual: res,
            })
        }
    }

    /// `ψ(a) − ψ(b) − Dψ(b)·(a − b)`, evaluated without the cancellation of
    /// the direct formula when `a` is close to `b`.
    pub fn bregman(&self, a: &[f64], b: &[f64]) -> f64 {
        let q = self.exponent;
        let w2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        if q == 2.0 {
            return 0.5 * (self.coefficient + self.regularizer) * w2;
        }
        if w2 == 0.0 {
            return 0.0;
        }
        let quad = 0.5 * self.regularizer * w2;
        let rb = norm(b);
        if w2.sqrt() > 0.25 * rb {
            let ra = norm(a);
            let bw: f64 = a.iter().zip(b).map(|(x, y)| y * (x - y)).sum();
            let c = self.coefficient;
            return quad + c / q * (ra.powf(q) - rb.powf(q)) - c * rb.powf(q - 2.0) * bw;
        }
        // ∫₀¹ (1−s) wᵀD²p(b + s w) w ds with 8-point Gauss–Legendre on [0, 1].
        let mut power = 0.0;
        let mut xi = vec![0.0; a.len()];
        for (node, weight) in GAUSS8 {
            let s = 0.5 * (1.0 + node);
            for ((x, ai), bi) in xi.iter_mut().zip(a).zip(b) {
                *x = bi + s * (ai - bi);
            }
            let r = norm(&xi);
            let xw: f64 = xi.iter().zip(a.iter().zip(b)).map(|(x, (ai, bi))| x * (ai - bi)).sum();
            let curv = r.powf(q - 2.0) * w2 + (q - 2.0) * r.powf(q - 4.0) * xw * xw;
            power += 0.5 * weight * (1.0 - s) * curv;
        }
        quad + self.coefficient * power
    }

    /// Applies `D²ψ(ξ)` to `v`.
    pub fn hessian_apply(&self, xi: &[f64], v: &[f64], out: &mut [f64]) {
        let q = self.exponent;
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        let r = r2.sqrt();
        let iso = if q == 2.0 {
            self.coefficient
        } else {
            self.coefficient * r.powf(q - 2.0)
        } + self.regularizer;
        for (o, vi) in out.iter_mut().zip(v) {
            *o = iso * vi;
        }
        if q != 2.0 && r > 0.0 {
            // a (q−2) |ξ|^{q−4} (ξ·v) ξ
            let dot: f64 = xi.iter().zip(v).map(|(x, y)| x * y).sum();
            let c = self.coefficient * (q - 2.0) * r.powf(q - 4.0) * dot;
            for (o, x) in out.iter_mut().zip(xi) {
                *o += c * x;
            }
        }
    }
}

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite components")))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `ψ(ξ)`.
pub fn eval_psi(density: &PowerDensity, xi: &[f64]) -> Result<f64> {
    check_finite(xi, "xi")?;
    Ok(density.radial(norm(xi)))
}

/// `Dψ(ξ) = a|ξ|^{q−2}ξ + εξ`.
pub fn grad_psi(density: &PowerDensity, xi: &[f64]) -> Result<Vec<f64>> {
    check_finite(xi, "xi")?;
    let mut out = vec![0.0; xi.len()];
    grad_psi_into(density, xi, &mut out);
    Ok(out)
}

pub(crate) fn grad_psi_into(density: &PowerDensity, xi: &[f64], out: &mut [f64]) {
    let r = norm(xi);
    let scale = if r == 0.0 {
        0.0
    } else {
        density.radial_slope(r) / r
    };
    for (o, x) in out.iter_mut().zip(xi) {
        *o = scale * x;
    }
}

/// `ψ*(y)` together with its maximizer.
pub fn eval_conjugate(density: &PowerDensity, y: &[f64]) -> Result<ConjugateValue> {
    check_finite(y, "y")?;
    let s = norm(y);
    let (r, newton_iters) = density.invert_radial_slope(s)?;
    let argmax: Vec<f64> = if s == 0.0 {
        vec![0.0; y.len()]
    } else {
        y.iter().map(|v| r * v / s).collect()
    };
    let value = (r * s - density.radial(r)).max(0.0);
    Ok(ConjugateValue {
        value,
        argmax,
        newton_iters,
    })
}

/// `ψ(x) + ψ*(y) − x·y`, nonnegative with equality iff `y = Dψ(x)`.
pub fn fenchel_gap(density: &PowerDensity, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "x has {} components, y has {}",
            x.len(),
            y.len()
        )));
    }
    let psi = eval_psi(density, x)?;
    let conj = eval_conjugate(density, y)?;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    Ok(psi + conj.value - dot)
}
