use serde::{Deserialize, Serialize};

use super::SpaceGrid;
use crate::error::{Error, Result};

/// Nodal values of a `k`-component field on the interior nodes of a grid.
/// Layout is node-major: component `c` of node `i` sits at `i * k + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: SpaceGrid,
    components: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: SpaceGrid, components: usize) -> Self {
        Self {
            grid,
            components,
            values: vec![0.0; grid.node_count() * components],
        }
    }

    pub fn from_values(grid: SpaceGrid, components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::InvalidInput("field needs at least one component".into()));
        }
        let expected = grid.node_count() * components;
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "field expects {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("field value {i} is not finite")));
        }
        Ok(Self {
            grid,
            components,
            values,
        })
    }

    /// Samples `f(x, component)` at every interior node.
    pub fn from_fn(grid: SpaceGrid, components: usize, mut f: impl FnMut([f64; 2], usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.node_count() * components);
        for node in 0..grid.node_count() {
            let x = grid.node_coords(node);
            for c in 0..components {
                values.push(f(x, c));
            }
        }
        Self {
            grid,
            components,
            values,
        }
    }

    pub fn grid(&self) -> SpaceGrid {
        self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.grid == other.grid && self.components == other.components
    }

    pub(crate) fn with_values(&self, values: Vec<f64>) -> Field {
        debug_assert_eq!(values.len(), self.values.len());
        Field {
            grid: self.grid,
            components: self.components,
            values,
        }
    }

    /// `h^d Σ a·b`, the pairing of `H` (and of `X` with `X*`).
    pub fn h_inner(&self, other: &Field) -> f64 {
        self.grid.cell_volume() * crate::linalg::dot(&self.values, &other.values)
    }

    pub fn h_norm(&self) -> f64 {
        self.h_inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn axpy(&mut self, alpha: f64, x: &Field) {
        for (a, b) in self.values.iter_mut().zip(&x.values) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        self.with_values(self.values.iter().map(|v| alpha * v).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
