use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid of interior nodes on the unit interval or unit square with
/// homogeneous Dirichlet boundary. Spacing is `1/(N+1)`.
///
/// Gradients live on cells: the `(N+1)^d` points `i ∈ {0..N}^d` of the
/// extended lattice. Direction `r` of cell `i` is the forward difference
/// between extended nodes `i` and `i + e_r`, so every grid edge is visited
/// exactly once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceGrid {
    dimension: usize,
    interior_nodes: usize,
}

impl SpaceGrid {
    pub fn new(dimension: usize, interior_nodes: usize) -> Result<Self> {
        if !(dimension == 1 || dimension == 2) {
            return Err(Error::InvalidInput(format!(
                "grid dimension must be 1 or 2, got {dimension}"
            )));
        }
        if interior_nodes == 0 {
            return Err(Error::InvalidInput("grid needs at least one interior node".into()));
        }
        Ok(Self {
            dimension,
            interior_nodes,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn interior_nodes(&self) -> usize {
        self.interior_nodes
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.interior_nodes + 1) as f64
    }

    /// `h^d`, the quadrature weight of one node or one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dimension as i32)
    }

    pub fn node_count(&self) -> usize {
        self.interior_nodes.pow(self.dimension as u32)
    }

    pub fn cell_count(&self) -> usize {
        (self.interior_nodes + 1).pow(self.dimension as u32)
    }

    /// Coordinates of interior node `node`.
    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let n = self.interior_nodes;
        let h = self.spacing();
        match self.dimension {
            1 => [(node + 1) as f64 * h, 0.0],
            _ => [((node % n) + 1) as f64 * h, ((node / n) + 1) as f64 * h],
        }
    }

    /// Coordinates of the midpoint of the edge in direction `r` of `cell`.
    pub fn edge_midpoint(&self, cell: usize, r: usize) -> [f64; 2] {
        let h = self.spacing();
        let e = self.cell_ext(cell);
        let mut x = [e[0] as f64 * h, e[1] as f64 * h];
        x[r] += 0.5 * h;
        x
    }

    fn cell_ext(&self, cell: usize) -> [usize; 2] {
        let m = self.interior_nodes + 1;
        match self.dimension {
            1 => [cell, 0],
            _ => [cell % m, cell / m],
        }
    }

    fn ext_to_node(&self, e: [usize; 2]) -> Option<usize> {
        let n = self.interior_nodes;
        let inside = |c: usize| c >= 1 && c <= n;
        match self.dimension {
            1 => inside(e[0]).then(|| e[0] - 1),
            _ => (inside(e[0]) && inside(e[1])).then(|| (e[1] - 1) * n + (e[0] - 1)),
        }
    }

    /// Interior node indices at the tail and head of the edge in direction
    /// `r` of `cell`; `None` marks a boundary node.
    pub fn edge_nodes(&self, cell: usize, r: usize) -> (Option<usize>, Option<usize>) {
        let lo = self.cell_ext(cell);
        let mut hi = lo;
        hi[r] += 1;
        (self.ext_to_node(lo), self.ext_to_node(hi))
    }

    /// Index bandwidth of every nodal operator built from cell stencils on
    /// fields with `components` components.
    pub fn bandwidth(&self, components: usize) -> usize {
        let n = self.interior_nodes;
        components * n.pow(self.dimension as u32 - 1) + components - 1
    }

    /// Smallest eigenvalue of `GᵀG` (the negative discrete Laplacian).
    pub fn min_laplacian_eigenvalue(&self) -> f64 {
        let h = self.spacing();
        let s = (std::f64::consts::PI * h / 2.0).sin();
        self.dimension as f64 * 4.0 / (h * h) * s * s
    }

    /// Largest eigenvalue bound for `GᵀG`.
    pub fn max_laplacian_eigenvalue(&self) -> f64 {
        let h = self.spacing();
        4.0 * self.dimension as f64 / (h * h)
    }

    /// Discrete Poincaré constant: `‖u‖_H ≤ c ‖∇u‖_{L²}`.
    pub fn poincare_constant(&self) -> f64 {
        1.0 / self.min_laplacian_eigenvalue().sqrt()
    }
}
