use super::spec::ModelSpec;
use crate::discretization::{
    edge_average_into, edge_average_transpose_add, gradient_into, gradient_transpose_into, Field, SpaceGrid,
};
use crate::energy::SpatialPotential;
use crate::error::{Error, Result};

/// A model bound to a grid and component count, with the spatial potential
/// prefactored. All energy, solver and checker routines work on this.
#[derive(Debug, Clone)]
pub struct Evolution {
    model: ModelSpec,
    potential: SpatialPotential,
}

impl Evolution {
    pub fn new(model: ModelSpec, grid: SpaceGrid, components: usize) -> Result<Self> {
        model.validate()?;
        if components == 0 {
            return Err(Error::InvalidInput("components must be positive".into()));
        }
        let potential = SpatialPotential::new(grid, components, model.density)?;
        Ok(Self { model, potential })
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn potential(&self) -> &SpatialPotential {
        &self.potential
    }

    pub fn grid(&self) -> SpaceGrid {
        self.potential.grid()
    }

    pub fn components(&self) -> usize {
        self.potential.components()
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn lambda(&self) -> f64 {
        self.model.lambda()
    }

    fn edge_len(&self) -> usize {
        let g = self.grid();
        g.cell_count() * self.components() * g.dimension()
    }

    /// Iterates `(cell, component, direction, flat index)` over edge slots.
    fn for_each_edge(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let g = self.grid();
        let k = self.components();
        let d = g.dimension();
        for cell in 0..g.cell_count() {
            for c in 0..k {
                for r in 0..d {
                    f(cell, c, r, cell * k * d + c * d + r);
                }
            }
        }
    }

    /// `Λ_t(u)` in the nodal dual representation.
    pub fn lambda_op(&self, u: &[f64], t: f64) -> Result<Vec<f64>> {
        let g = self.grid();
        let k = self.components();
        let d = g.dimension();
        let mut out = vec![0.0; self.dim()];
        let m = &self.model;
        if m.flux.is_active() || m.scalar_flux.is_active() {
            let mut avg = vec![0.0; self.edge_len()];
            edge_average_into(g, k, u, &mut avg);
            let mut flux = vec![0.0; avg.len()];
            self.for_each_edge(|cell, _c, r, i| {
                let x = g.edge_midpoint(cell, r);
                flux[i] = m.flux.value(avg[i], x, t) - m.scalar_flux.value(avg[i]);
            });
            if let Some(i) = flux.iter().position(|v| !v.is_finite()) {
                return Err(Error::ModelEvaluation {
                    location: format!("flux at cell {} (t = {t})", i / (k * d)),
                });
            }
            gradient_transpose_into(g, k, &flux, &mut out);
        }
        if m.reaction.is_active() {
            for node in 0..g.node_count() {
                let x = g.node_coords(node);
                for c in 0..k {
                    let i = node * k + c;
                    let v = m.reaction.value(u[i], x, d, t);
                    if !v.is_finite() {
                        return Err(Error::ModelEvaluation {
                            location: format!("reaction at node {node} component {c} (t = {t})"),
                        });
                    }
                    out[i] -= v;
                }
            }
        }
        Ok(out)
    }

    /// `DΛ_t(u)·v` by forward differentiation of the pointwise maps.
    pub fn lambda_directional(&self, u: &[f64], v: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.lambda_directional_into(u, v, t, &mut out);
        out
    }

    pub(crate) fn lambda_directional_into(&self, u: &[f64], v: &[f64], t: f64, out: &mut [f64]) {
        let g = self.grid();
        let k = self.components();
        let m = &self.model;
        out.iter_mut().for_each(|o| *o = 0.0);
        if m.flux.is_active() || m.scalar_flux.is_active() {
            let mut avg = vec![0.0; self.edge_len()];
            let mut davg = vec![0.0; self.edge_len()];
            edge_average_into(g, k, u, &mut avg);
            edge_average_into(g, k, v, &mut davg);
            let mut flux = vec![0.0; avg.len()];
            self.for_each_edge(|cell, _c, r, i| {
                let x = g.edge_midpoint(cell, r);
                let slope = m.flux.derivative(avg[i], x, t) - m.scalar_flux.derivative(avg[i]);
                flux[i] = slope * davg[i];
            });
            gradient_transpose_into(g, k, &flux, out);
        }
        if m.reaction.is_active() {
            for node in 0..g.node_count() {
                let x = g.node_coords(node);
                for c in 0..k {
                    let i = node * k + c;
                    out[i] -= m.reaction.derivative(u[i], x, t) * v[i];
                }
            }
        }
    }

    /// `DΛ_t(u)ᵀ·w`, so that `w·(DΛ v) = (DΛᵀ w)·v`.
    pub fn lambda_adjoint(&self, u: &[f64], w: &[f64], t: f64) -> Vec<f64> {
        let g = self.grid();
        let k = self.components();
        let m = &self.model;
        let mut out = vec![0.0; self.dim()];
        if m.flux.is_active() || m.scalar_flux.is_active() {
            let mut avg = vec![0.0; self.edge_len()];
            edge_average_into(g, k, u, &mut avg);
            let mut gw = vec![0.0; avg.len()];
            gradient_into(g, k, w, &mut gw);
            self.for_each_edge(|cell, _c, r, i| {
                let x = g.edge_midpoint(cell, r);
                gw[i] *= m.flux.derivative(avg[i], x, t) - m.scalar_flux.derivative(avg[i]);
            });
            edge_average_transpose_add(g, k, &gw, &mut out);
        }
        if m.reaction.is_active() {
            for node in 0..g.node_count() {
                let x = g.node_coords(node);
                for c in 0..k {
                    let i = node * k + c;
                    out[i] -= m.reaction.derivative(u[i], x, t) * w[i];
                }
            }
        }
        out
    }

    /// `DΨ(λu)`.
    pub fn dpsi_lambda(&self, u: &[f64]) -> Vec<f64> {
        if self.lambda() == 0.0 {
            return vec![0.0; u.len()];
        }
        self.potential.gradient(u)
    }

    /// Field-level `Λ_t(u)`.
    pub fn apply_lambda(&self, state: &Field, t: f64) -> Result<Field> {
        if state.grid() != self.grid() || state.components() != self.components() {
            return Err(Error::ShapeMismatch("state is not on the model grid".into()));
        }
        Ok(state.with_values(self.lambda_op(state.values(), t)?))
    }
}

/// `Λ_t(state)` for a one-off evaluation.
pub fn apply_lambda(model: &ModelSpec, state: &Field, t: f64) -> Result<Field> {
    Evolution::new(model.clone(), state.grid(), state.components())?.apply_lambda(state, t)
}
