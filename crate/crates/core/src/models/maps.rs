//! Pointwise ingredients of `Λ_t`: reaction `Θ`, flux `Ξ` and the scalar
//! convective flux `F`. All built-in maps act componentwise, so their
//! Jacobians in `B` are diagonal and each exposes a scalar derivative.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `Θ_c(B, x, t) = rate·B_c + source·Π_r sin(π x_r)·cos(2π t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reaction {
    None,
    Linear { rate: f64, source: f64 },
}

/// `Ξ_{c,r}(B, x, t) = coeff·sin(B_c)` in every direction `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flux {
    None,
    Sine { coeff: f64 },
}

/// `F_r(u) = f(u)` in every direction, with `f(u) = u²/2` on `|u| ≤ U_max`
/// continued linearly (C¹) outside, so `f` is globally Lipschitz with
/// constant `U_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarFlux {
    None,
    TruncatedBurgers { u_max: f64 },
}

fn profile(x: [f64; 2], dim: usize) -> f64 {
    (0..dim).map(|r| (PI * x[r]).sin()).product()
}

impl Reaction {
    pub fn is_active(&self) -> bool {
        !matches!(self, Reaction::None)
    }

    pub fn value(&self, b: f64, x: [f64; 2], dim: usize, t: f64) -> f64 {
        match *self {
            Reaction::None => 0.0,
            Reaction::Linear { rate, source } => {
                rate * b + source * profile(x, dim) * (2.0 * PI * t).cos()
            }
        }
    }

    pub fn derivative(&self, _b: f64, _x: [f64; 2], _t: f64) -> f64 {
        match *self {
            Reaction::None => 0.0,
            Reaction::Linear { rate, .. } => rate,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Reaction::None => 0.0,
            Reaction::Linear { rate, .. } => rate.abs(),
        }
    }
}

impl Flux {
    pub fn is_active(&self) -> bool {
        !matches!(self, Flux::None)
    }

    pub fn value(&self, b: f64, _x: [f64; 2], _t: f64) -> f64 {
        match *self {
            Flux::None => 0.0,
            Flux::Sine { coeff } => coeff * b.sin(),
        }
    }

    pub fn derivative(&self, b: f64, _x: [f64; 2], _t: f64) -> f64 {
        match *self {
            Flux::None => 0.0,
            Flux::Sine { coeff } => coeff * b.cos(),
        }
    }

    /// Lipschitz constant of one direction column.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Flux::None => 0.0,
            Flux::Sine { coeff } => coeff.abs(),
        }
    }
}

impl ScalarFlux {
    pub fn is_active(&self) -> bool {
        !matches!(self, ScalarFlux::None)
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            ScalarFlux::None => 0.0,
            ScalarFlux::TruncatedBurgers { u_max } => {
                if u.abs() <= u_max {
                    0.5 * u * u
                } else {
                    u_max * u.abs() - 0.5 * u_max * u_max
                }
            }
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            ScalarFlux::None => 0.0,
            ScalarFlux::TruncatedBurgers { u_max } => u.clamp(-u_max, u_max),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            ScalarFlux::None => 0.0,
            ScalarFlux::TruncatedBurgers { u_max } => u_max,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burgers_truncation_is_c1_and_lipschitz() {
        let f = ScalarFlux::TruncatedBurgers { u_max: 2.0 };
        assert_eq!(f.value(1.0), 0.5);
        assert_eq!(f.value(2.0), 2.0);
        assert_eq!(f.value(3.0), 4.0);
        assert_eq!(f.value(-3.0), 4.0);
        for u in [-5.0, -2.0, -0.3, 0.0, 1.7, 2.0, 9.0] {
            let s = 1e-6;
            let fd = (f.value(u + s) - f.value(u - s)) / (2.0 * s);
            assert!((fd - f.derivative(u)).abs() < 1e-6);
            assert!(f.derivative(u).abs() <= f.lipschitz());
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let r = Reaction::Linear { rate: -1.5, source: 0.7 };
        let x = [0.3, 0.0];
        let fd = (r.value(0.2 + 1e-6, x, 1, 0.4) - r.value(0.2 - 1e-6, x, 1, 0.4)) / 2e-6;
        assert!((fd - r.derivative(0.2, x, 0.4)).abs() < 1e-8);
        let g = Flux::Sine { coeff: 0.5 };
        let fd = (g.value(1.1 + 1e-6, x, 0.0) - g.value(1.1 - 1e-6, x, 0.0)) / 2e-6;
        assert!((fd - g.derivative(1.1, x, 0.0)).abs() < 1e-8);
    }
}
