use serde::{Deserialize, Serialize};

use super::maps::{Flux, Reaction, ScalarFlux};
use crate::convex_core::PowerDensity;
use crate::error::{Error, Result};

/// Hypothesis constants a user may assert for a model instead of the
/// Lipschitz-derived defaults. The checkers then test the asserted values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantOverrides {
    pub growth_c0: Option<f64>,
    pub deriv_g: Option<f64>,
    pub monotone_g_hat: Option<f64>,
    pub positivity_c_tilde: Option<f64>,
    pub positivity_mu_bar: Option<f64>,
    pub convexity_c0: Option<f64>,
}

/// Ingredients of `dv/dt + Λ_t(u) + DΨ(λu) = 0`.
///
/// `Ψ(u) = Σ_cells h^d ψ(∇u)` and
/// `⟨δ, Λ_t(u)⟩ = Σ h^d [Ξ(u):∇δ − Θ(u)·δ] − Σ h^d F(u)·∇δ`,
/// so the scalar flux enters the equation as `+div F(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub density: PowerDensity,
    lambda: u8,
    pub reaction: Reaction,
    pub flux: Flux,
    pub scalar_flux: ScalarFlux,
    pub overrides: ConstantOverrides,
    /// Bound on `‖x‖_X` for samples drawn by the hypothesis checkers and
    /// for constants that only hold on bounded sets.
    pub radius: f64,
}

pub const DEFAULT_RADIUS: f64 = 10.0;
pub const DEFAULT_U_MAX: f64 = 10.0;

impl ModelSpec {
    pub fn new(
        name: impl Into<String>,
        density: PowerDensity,
        lambda: u8,
        reaction: Reaction,
        flux: Flux,
        scalar_flux: ScalarFlux,
    ) -> Result<Self> {
        let m = Self {
            name: name.into(),
            density,
            lambda,
            reaction,
            flux,
            scalar_flux,
            overrides: ConstantOverrides::default(),
            radius: DEFAULT_RADIUS,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda > 1 {
            return Err(Error::InvalidInput(format!("lambda must be 0 or 1, got {}", self.lambda)));
        }
        PowerDensity::new(self.density.coefficient, self.density.exponent, self.density.regularizer)?;
        let lips = [self.reaction.lipschitz(), self.flux.lipschitz(), self.scalar_flux.lipschitz()];
        if lips.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidInput("model maps need finite Lipschitz constants".into()));
        }
        if let ScalarFlux::TruncatedBurgers { u_max } = self.scalar_flux {
            if !(u_max > 0.0) {
                return Err(Error::InvalidInput("u_max must be positive".into()));
            }
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidInput("checker radius must be positive".into()));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda as f64
    }

    pub fn with_lambda(mut self, lambda: u8) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn has_lambda_part(&self) -> bool {
        self.reaction.is_active() || self.flux.is_active() || self.scalar_flux.is_active()
    }

    /// `∂_t u = Δu`.
    pub fn heat() -> Self {
        Self::new("heat", PowerDensity::quadratic(), 1, Reaction::None, Flux::None, ScalarFlux::None)
            .expect("valid")
    }

    /// No operator part: `Θ = Ξ = F = 0`. Same dynamics as [`ModelSpec::heat`].
    pub fn trivial() -> Self {
        Self {
            name: "trivial".into(),
            ..Self::heat()
        }
    }

    /// `∂_t u + div F(u) − Δu = 0` with truncated Burgers flux.
    pub fn burgers(u_max: f64) -> Result<Self> {
        Self::new(
            "burgers",
            PowerDensity::quadratic(),
            1,
            Reaction::None,
            Flux::None,
            ScalarFlux::TruncatedBurgers { u_max },
        )
    }

    /// `∂_t u = Θ(u) + div Ξ(u) + div Dψ(∇u)`.
    pub fn divergence_form(density: PowerDensity, reaction: Reaction, flux: Flux) -> Result<Self> {
        Self::new("divergence", density, 1, reaction, flux, ScalarFlux::None)
    }

    /// Heat plus a destabilizing reaction `Θ(B) = κB`, asserting a
    /// positivity constant `μ̄ = 1` that the reaction violates.
    pub fn adversarial(kappa: f64) -> Result<Self> {
        let mut m = Self::new(
            "adversarial",
            PowerDensity::quadratic(),
            1,
            Reaction::Linear { rate: kappa, source: 0.0 },
            Flux::None,
            ScalarFlux::None,
        )?;
        m.overrides.positivity_mu_bar = Some(1.0);
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_must_be_binary() {
        assert!(ModelSpec::heat().with_lambda(2).is_err());
        assert_eq!(ModelSpec::heat().with_lambda(0).unwrap().lambda(), 0.0);
    }

    #[test]
    fn builtins_validate() {
        assert!(!ModelSpec::heat().has_lambda_part());
        assert!(ModelSpec::burgers(DEFAULT_U_MAX).unwrap().has_lambda_part());
        assert!(ModelSpec::burgers(0.0).is_err());
        let m = ModelSpec::adversarial(100.0).unwrap();
        assert_eq!(m.overrides.positivity_mu_bar, Some(1.0));
    }
}
