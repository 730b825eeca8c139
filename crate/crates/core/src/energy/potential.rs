//! The spatial energy `Ψ(u) = Σ_cells h^d ψ(∇u)` on `X`, its gradient and
//! Hessian in the nodal dual representation, and its conjugate on `X*`.
//!
//! `Ψ*` does not split nodewise because the cell gradients couple
//! neighbouring nodes. The maximizer of `⟨z, y⟩ − Ψ(z)` solves the
//! assembled equation `Gᵀ Dψ(Gz) = y`, handled by damped Newton with a
//! banded direct solve of the SPD Jacobian `Gᵀ D²ψ(Gz) G`.

use crate::convex_core::{grad_psi_into, PowerDensity};
use crate::discretization::{gradient_into, gradient_transpose_into, PoissonSolver, SpaceGrid};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, BandMatrix};

const NEWTON_MAX_ITERS: usize = 100;
const NEWTON_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SpatialPotential {
    grid: SpaceGrid,
    components: usize,
    density: PowerDensity,
    poisson: PoissonSolver,
}

/// Result of a conjugate evaluation.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub value: f64,
    /// `DΨ*(y)`, an element of `X`.
    pub argmax: Vec<f64>,
    pub iterations: usize,
}

impl SpatialPotential {
    pub fn new(grid: SpaceGrid, components: usize, density: PowerDensity) -> Result<Self> {
        if !density.is_quadratic() && density.regularizer == 0.0 {
            return Err(Error::InvalidInput(
                "exponent q > 2 needs a positive regularizer for a nonsingular conjugate".into(),
            ));
        }
        Ok(Self {
            grid,
            components,
            density,
            poisson: PoissonSolver::new(grid, components)?,
        })
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn density(&self) -> &PowerDensity {
        &self.density
    }

    pub fn poisson(&self) -> &PoissonSolver {
        &self.poisson
    }

    pub fn dim(&self) -> usize {
        self.grid.node_count() * self.components
    }

    fn block(&self) -> usize {
        self.components * self.grid.dimension()
    }

    fn edge_len(&self) -> usize {
        self.grid.cell_count() * self.block()
    }

    pub(crate) fn cell_gradients(&self, z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.edge_len()];
        gradient_into(self.grid, self.components, z, &mut g);
        g
    }

    /// `Ψ(z)`.
    pub fn value(&self, z: &[f64]) -> f64 {
        let g = self.cell_gradients(z);
        let w = self.grid.cell_volume();
        g.chunks(self.block())
            .map(|xi| self.density.radial(norm2(xi)))
            .sum::<f64>()
            * w
    }

    /// `DΨ(z)` as a nodal dual vector.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.gradient_into(z, &mut out);
        out
    }

    pub(crate) fn gradient_into(&self, z: &[f64], out: &mut [f64]) {
        let mut g = self.cell_gradients(z);
        let b = self.block();
        let mut tmp = vec![0.0; b];
        for xi in g.chunks_mut(b) {
            grad_psi_into(&self.density, xi, &mut tmp);
            xi.copy_from_slice(&tmp);
        }
        gradient_transpose_into(self.grid, self.components, &g, out);
    }

    /// `D²Ψ(z)·v`.
    pub fn hessian_apply(&self, z: &[f64], v: &[f64], out: &mut [f64]) {
        let gz = self.cell_gradients(z);
        let gv = self.cell_gradients(v);
        self.hessian_apply_with(&gz, &gv, out);
    }

    fn hessian_apply_with(&self, gz: &[f64], gv: &[f64], out: &mut [f64]) {
        let b = self.block();
        let mut hv = vec![0.0; gv.len()];
        for ((xi, vi), oi) in gz.chunks(b).zip(gv.chunks(b)).zip(hv.chunks_mut(b)) {
            self.density.hessian_apply(xi, vi, oi);
        }
        gradient_transpose_into(self.grid, self.components, &hv, out);
    }

    /// Banded matrix of `D²Ψ(z)`.
    pub(crate) fn hessian_band(&self, z: &[f64]) -> BandMatrix {
        let gz = self.cell_gradients(z);
        let mut gv = vec![0.0; self.edge_len()];
        BandMatrix::from_operator(self.dim(), self.grid.bandwidth(self.components), |v, out| {
            gradient_into(self.grid, self.components, v, &mut gv);
            self.hessian_apply_with(&gz, &gv, out);
        })
    }

    /// `Ψ(x) − Ψ(z) − ⟨x − z, DΨ(z)⟩`, summed cellwise.
    pub fn bregman(&self, x: &[f64], z: &[f64]) -> f64 {
        let gx = self.cell_gradients(x);
        let gz = self.cell_gradients(z);
        let b = self.block();
        gx.chunks(b)
            .zip(gz.chunks(b))
            .map(|(a, c)| self.density.bregman(a, c))
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// `‖z‖_X = (Σ h^d |∇z|^q)^{1/q}`.
    pub fn x_norm(&self, z: &[f64]) -> f64 {
        let q = self.density.exponent;
        let g = self.cell_gradients(z);
        let s: f64 = g.chunks(self.block()).map(|xi| norm2(xi).powf(q)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / q)
    }

    /// `‖y‖_* = ‖∇(GᵀG)⁻¹ y‖_{L^{q*}}`. Equals the dual norm of `X` when
    /// `q = 2` and bounds it from above otherwise.
    pub fn dual_norm(&self, y: &[f64]) -> f64 {
        let qs = self.density.dual_exponent();
        let mut phi = y.to_vec();
        self.poisson.solve_neg_in_place(&mut phi);
        let g = self.cell_gradients(&phi);
        let s: f64 = g.chunks(self.block()).map(|xi| norm2(xi).powf(qs)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / qs)
    }

    /// `Ψ*(y)` and its maximizer `DΨ*(y)`.
    pub fn conjugate(&self, y: &[f64]) -> Result<DualPoint> {
        let w = self.grid.cell_volume();
        let scale = norm2(y);
        if scale == 0.0 {
            return Ok(DualPoint {
                value: 0.0,
                argmax: vec![0.0; y.len()],
                iterations: 0,
            });
        }
        if self.density.is_quadratic() {
            let c = self.density.coefficient + self.density.regularizer;
            let mut z = y.to_vec();
            self.poisson.solve_neg_in_place(&mut z);
            z.iter_mut().for_each(|v| *v /= c);
            let value = 0.5 * w * dot(&z, y);
            return Ok(DualPoint {
                value,
                argmax: z,
                iterations: 1,
            });
        }
        let mut z = self.initial_guess(y);
        let objective = |z: &[f64]| self.value(z) - w * dot(z, y);
        let mut f = objective(&z);
        let mut grad = vec![0.0; y.len()];
        for iter in 1..=NEWTON_MAX_ITERS {
            self.gradient_into(&z, &mut grad);
            grad.iter_mut().zip(y).for_each(|(g, t)| *g -= t);
            let res = norm2(&grad);
            if res <= NEWTON_TOL * scale {
                let value = (w * dot(&z, y) - self.value(&z)).max(0.0);
                return Ok(DualPoint {
                    value,
                    argmax: z,
                    iterations: iter - 1,
                });
            }
            let lu = self.hessian_band(&z).factor()?;
            let mut step = grad.clone();
            lu.solve_in_place(&mut step);
            // Newton decrement; Armijo along −step in the h^d-weighted objective.
            let slope = -w * dot(&grad, &step);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = z.iter().zip(&step).map(|(a, s)| a - alpha * s).collect();
                let ft = objective(&trial);
                if ft <= f + 1e-4 * alpha * slope || (ft - f).abs() <= 1e-15 * f.abs().max(1e-300) {
                    z = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NumericalFailure {
                    what: "conjugate Newton line search".into(),
                    residual: res / scale,
                });
            }
        }
        self.gradient_into(&z, &mut grad);
        grad.iter_mut().zip(y).for_each(|(g, t)| *g -= t);
        Err(Error::NumericalFailure {
            what: "conjugate Newton".into(),
            residual: norm2(&grad) / scale,
        })
    }

    /// Best multiple of the quadratic-density solution `(GᵀG)⁻¹y`.
    fn initial_guess(&self, y: &[f64]) -> Vec<f64> {
        let mut base = y.to_vec();
        self.poisson.solve_neg_in_place(&mut base);
        // φ(s) = Ψ(s·base) − s⟨base, y⟩ is convex in s; its slope is
        // ⟨base, DΨ(s·base)⟩ − ⟨base, y⟩ = Σ h^d ψ'(s|g_c|)|g_c| − ⟨base, y⟩.
        let g = self.cell_gradients(&base);
        let mags: Vec<f64> = g.chunks(self.block()).map(norm2).collect();
        let target = dot(&base, y);
        let slope = |s: f64| mags.iter().map(|m| self.density.radial_slope(s * m) * m).sum::<f64>() - target;
        let (mut lo, mut hi) = (0.0, 1.0);
        while slope(hi) < 0.0 && hi < 1e12 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        base.iter_mut().for_each(|v| *v *= s);
        base
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{laplacian, Field};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, amp: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
    }

    #[test]
    fn quadratic_gradient_is_negative_laplacian() {
        let grid = SpaceGrid::new(1, 11).unwrap();
        let p = SpatialPotential::new(grid, 1, PowerDensity::quadratic()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Field::from_values(grid, 1, random(11, 1.0, &mut rng)).unwrap();
        let g = p.gradient(z.values());
        for (a, b) in g.iter().zip(laplacian(&z).values()) {
            assert!((a + b).abs() < 1e-10);
        }
        let psi = p.value(z.values());
        assert!((psi - 0.5 * (-laplacian(&z).h_inner(&z))).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (d, n, k) in [(1, 8, 1), (2, 4, 2)] {
            let grid = SpaceGrid::new(d, n).unwrap();
            let p = SpatialPotential::new(grid, k, PowerDensity::new(1.3, 3.5, 0.2).unwrap()).unwrap();
            let z = random(p.dim(), 1.0, &mut rng);
            let v = random(p.dim(), 1.0, &mut rng);
            let s = 1e-6;
            let zp: Vec<f64> = z.iter().zip(&v).map(|(a, b)| a + s * b).collect();
            let zm: Vec<f64> = z.iter().zip(&v).map(|(a, b)| a - s * b).collect();
            let fd = (p.value(&zp) - p.value(&zm)) / (2.0 * s);
            let an = grid.cell_volume() * dot(&p.gradient(&z), &v);
            assert!((fd - an).abs() < 1e-7 * an.abs().max(1.0), "{fd} vs {an}");
        }
    }

    #[test]
    fn conjugate_inverts_gradient_and_satisfies_fenchel_young() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (d, n, k, dens) in [
            (1, 15, 1, PowerDensity::quadratic()),
            (1, 15, 1, PowerDensity::new(1.0, 4.0, 0.1).unwrap()),
            (1, 10, 2, PowerDensity::new(0.5, 3.0, 0.05).unwrap()),
            (2, 5, 1, PowerDensity::new(1.0, 4.0, 0.2).unwrap()),
        ] {
            let grid = SpaceGrid::new(d, n).unwrap();
            let p = SpatialPotential::new(grid, k, dens).unwrap();
            let w = grid.cell_volume();
            for _ in 0..5 {
                let x = random(p.dim(), 2.0, &mut rng);
                let y = p.gradient(&x);
                let c = p.conjugate(&y).unwrap();
                let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in c.argmax.iter().zip(&x) {
                    assert!((a - b).abs() < 1e-9 * scale, "{a} vs {b}");
                }
                let gap = p.value(&x) + c.value - w * dot(&x, &y);
                assert!(gap.abs() < 1e-10 * c.value.max(1.0), "gap {gap}");
                // Fenchel–Young at a mismatched pair.
                let other = random(p.dim(), 2.0, &mut rng);
                let gap = p.value(&other) + c.value - w * dot(&other, &y);
                assert!(gap >= -1e-12 * c.value.max(1.0));
            }
        }
    }

    #[test]
    fn dual_norm_is_dual_for_quadratic() {
        let grid = SpaceGrid::new(1, 12).unwrap();
        let p = SpatialPotential::new(grid, 1, PowerDensity::quadratic()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = random(12, 1.0, &mut rng);
        let c = p.conjugate(&y).unwrap();
        // sup ⟨z,y⟩/‖z‖_X is attained at z = (GᵀG)⁻¹y.
        let attained = grid.cell_volume() * dot(&c.argmax, &y) / p.x_norm(&c.argmax);
        assert!((p.dual_norm(&y) - attained).abs() < 1e-12 * attained);
        assert!((c.value - 0.5 * attained * attained).abs() < 1e-12 * c.value);
    }

    #[test]
    fn power_law_needs_regularizer() {
        let grid = SpaceGrid::new(1, 4).unwrap();
        assert!(SpatialPotential::new(grid, 1, PowerDensity::new(1.0, 4.0, 0.0).unwrap()).is_err());
    }
}
