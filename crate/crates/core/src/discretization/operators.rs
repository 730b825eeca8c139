//! Difference operators with zero Dirichlet extension.
//!
//! `G` is the forward-difference gradient from nodes to cells; the discrete
//! Laplacian is `Δ = −GᵀG`. Because nodes and cells carry the same weight
//! `h^d`, `⟨∇u, ∇δ⟩ = −⟨Δu, δ⟩` holds exactly.

use super::{Field, SpaceGrid};
use crate::error::Result;
use crate::linalg::{BandLu, BandMatrix};

/// Per-cell gradient matrices: entry `(c, r)` of cell `i` sits at
/// `i * k * d + c * d + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeVectors {
    pub grid: SpaceGrid,
    pub components: usize,
    pub values: Vec<f64>,
}

impl EdgeVectors {
    pub fn block(&self) -> usize {
        self.components * self.grid.dimension()
    }

    pub fn cell(&self, cell: usize) -> &[f64] {
        let b = self.block();
        &self.values[cell * b..(cell + 1) * b]
    }

    /// `h^d Σ a:b` over cells.
    pub fn inner(&self, other: &EdgeVectors) -> f64 {
        self.grid.cell_volume() * crate::linalg::dot(&self.values, &other.values)
    }
}

pub(crate) fn gradient_into(grid: SpaceGrid, k: usize, u: &[f64], out: &mut [f64]) {
    let d = grid.dimension();
    let inv_h = 1.0 / grid.spacing();
    let at = |node: Option<usize>, c: usize| node.map_or(0.0, |i| u[i * k + c]);
    for cell in 0..grid.cell_count() {
        for r in 0..d {
            let (lo, hi) = grid.edge_nodes(cell, r);
            for c in 0..k {
                out[cell * k * d + c * d + r] = (at(hi, c) - at(lo, c)) * inv_h;
            }
        }
    }
}

/// `Gᵀ g`, overwriting `out`.
pub(crate) fn gradient_transpose_into(grid: SpaceGrid, k: usize, g: &[f64], out: &mut [f64]) {
    let d = grid.dimension();
    let inv_h = 1.0 / grid.spacing();
    out.iter_mut().for_each(|v| *v = 0.0);
    for cell in 0..grid.cell_count() {
        for r in 0..d {
            let (lo, hi) = grid.edge_nodes(cell, r);
            for c in 0..k {
                let v = g[cell * k * d + c * d + r] * inv_h;
                if let Some(i) = hi {
                    out[i * k + c] += v;
                }
                if let Some(i) = lo {
                    out[i * k + c] -= v;
                }
            }
        }
    }
}

/// Edge-midpoint values: entry `(c, r)` of cell `i` is the mean of the two
/// endpoints of the direction-`r` edge.
pub(crate) fn edge_average_into(grid: SpaceGrid, k: usize, u: &[f64], out: &mut [f64]) {
    let d = grid.dimension();
    let at = |node: Option<usize>, c: usize| node.map_or(0.0, |i| u[i * k + c]);
    for cell in 0..grid.cell_count() {
        for r in 0..d {
            let (lo, hi) = grid.edge_nodes(cell, r);
            for c in 0..k {
                out[cell * k * d + c * d + r] = 0.5 * (at(hi, c) + at(lo, c));
            }
        }
    }
}

/// Transpose of [`edge_average_into`], accumulating into `out`.
pub(crate) fn edge_average_transpose_add(grid: SpaceGrid, k: usize, g: &[f64], out: &mut [f64]) {
    let d = grid.dimension();
    for cell in 0..grid.cell_count() {
        for r in 0..d {
            let (lo, hi) = grid.edge_nodes(cell, r);
            for c in 0..k {
                let v = 0.5 * g[cell * k * d + c * d + r];
                if let Some(i) = hi {
                    out[i * k + c] += v;
                }
                if let Some(i) = lo {
                    out[i * k + c] += v;
                }
            }
        }
    }
}

pub fn discrete_gradient(field: &Field) -> EdgeVectors {
    let grid = field.grid();
    let k = field.components();
    let mut values = vec![0.0; grid.cell_count() * k * grid.dimension()];
    gradient_into(grid, k, field.values(), &mut values);
    EdgeVectors {
        grid,
        components: k,
        values,
    }
}

/// `Gᵀ g`: the nodal vector `y` with `h^d y·δ = ⟨g, ∇δ⟩` for all `δ`.
pub fn gradient_transpose(edges: &EdgeVectors) -> Field {
    let mut out = Field::zeros(edges.grid, edges.components);
    gradient_transpose_into(edges.grid, edges.components, &edges.values, out.values_mut());
    out
}

pub fn laplacian(field: &Field) -> Field {
    let g = discrete_gradient(field);
    let mut out = gradient_transpose(&g);
    out.values_mut().iter_mut().for_each(|v| *v = -*v);
    out
}

fn neg_laplacian_apply(grid: SpaceGrid, k: usize) -> impl FnMut(&[f64], &mut [f64]) {
    let mut scratch = vec![0.0; grid.cell_count() * k * grid.dimension()];
    move |x: &[f64], y: &mut [f64]| {
        gradient_into(grid, k, x, &mut scratch);
        gradient_transpose_into(grid, k, &scratch, y);
    }
}

/// Factorized `−Δ = GᵀG` for repeated Dirichlet Poisson solves.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    grid: SpaceGrid,
    components: usize,
    lu: BandLu,
}

impl PoissonSolver {
    pub fn new(grid: SpaceGrid, components: usize) -> Result<Self> {
        let n = grid.node_count() * components;
        let m = BandMatrix::from_operator(n, grid.bandwidth(components), neg_laplacian_apply(grid, components));
        Ok(Self {
            grid,
            components,
            lu: m.factor()?,
        })
    }

    /// Solves `Δy = rhs` with `y = 0` on the boundary.
    pub fn solve(&self, rhs: &Field) -> Result<Field> {
        if rhs.grid() != self.grid || rhs.components() != self.components {
            return Err(crate::error::Error::ShapeMismatch(
                "right-hand side does not match the factorized grid".into(),
            ));
        }
        let mut y: Vec<f64> = rhs.values().iter().map(|v| -v).collect();
        self.lu.solve_in_place(&mut y);
        Ok(rhs.with_values(y))
    }

    /// Solves `GᵀG y = rhs` in place on a raw nodal vector.
    pub(crate) fn solve_neg_in_place(&self, y: &mut [f64]) {
        self.lu.solve_in_place(y);
    }
}

/// Solves `Δy = rhs` with homogeneous Dirichlet data.
pub fn poisson_solve(rhs: &Field) -> Result<Field> {
    if !rhs.is_finite() {
        return Err(crate::error::Error::InvalidInput("poisson right-hand side is not finite".into()));
    }
    PoissonSolver::new(rhs.grid(), rhs.components())?.solve(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(grid: SpaceGrid, k: usize, rng: &mut ChaCha8Rng) -> Field {
        Field::from_fn(grid, k, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn gradient_examples() {
        let g = SpaceGrid::new(1, 1).unwrap();
        let u = Field::from_values(g, 1, vec![1.0]).unwrap();
        assert_eq!(discrete_gradient(&u).values, vec![2.0, -2.0]);
        let z = Field::zeros(SpaceGrid::new(2, 4).unwrap(), 2);
        assert!(discrete_gradient(&z).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn laplacian_examples() {
        let g = SpaceGrid::new(1, 1).unwrap();
        let u = Field::from_values(g, 1, vec![1.0]).unwrap();
        assert_eq!(laplacian(&u).values(), &[-8.0]);
        assert!(laplacian(&Field::zeros(g, 1)).values().iter().all(|v| *v == 0.0));

        // Three-point stencil is exact on x(1−x): direct arithmetic gives −2.
        let g = SpaceGrid::new(1, 9).unwrap();
        let u = Field::from_fn(g, 1, |x, _| x[0] * (1.0 - x[0]));
        let h = g.spacing();
        let vals = u.values();
        for (i, v) in laplacian(&u).values().iter().enumerate() {
            let left = if i == 0 { 0.0 } else { vals[i - 1] };
            let right = if i + 1 == vals.len() { 0.0 } else { vals[i + 1] };
            let direct = (left - 2.0 * vals[i] + right) / (h * h);
            assert!((v - direct).abs() < 1e-10);
            assert!((v + 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn adjointness_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (d, n, k) in [(1, 13, 1), (1, 6, 2), (2, 5, 1), (2, 4, 3)] {
            let grid = SpaceGrid::new(d, n).unwrap();
            for _ in 0..20 {
                let u = random_field(grid, k, &mut rng);
                let v = random_field(grid, k, &mut rng);
                let lhs = discrete_gradient(&u).inner(&discrete_gradient(&v));
                let rhs = -laplacian(&u).h_inner(&v);
                assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
            }
        }
    }

    #[test]
    fn edge_average_transpose_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid = SpaceGrid::new(2, 5).unwrap();
        let k = 2;
        let u = random_field(grid, k, &mut rng);
        let m = grid.cell_count() * k * 2;
        let g: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut avg = vec![0.0; m];
        edge_average_into(grid, k, u.values(), &mut avg);
        let mut back = vec![0.0; u.len()];
        edge_average_transpose_add(grid, k, &g, &mut back);
        let lhs = crate::linalg::dot(&avg, &g);
        let rhs = crate::linalg::dot(u.values(), &back);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn poisson_examples() {
        let g = SpaceGrid::new(1, 15).unwrap();
        assert!(poisson_solve(&Field::zeros(g, 1)).unwrap().values().iter().all(|v| *v == 0.0));

        let rhs = Field::from_fn(g, 1, |_, _| -2.0);
        let y = poisson_solve(&rhs).unwrap();
        let exact = Field::from_fn(g, 1, |x, _| x[0] * (1.0 - x[0]));
        for (a, b) in y.values().iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_converges_at_second_order() {
        let err = |n: usize| {
            let g = SpaceGrid::new(1, n).unwrap();
            let rhs = Field::from_fn(g, 1, |x, _| -PI * PI * (PI * x[0]).sin());
            let y = poisson_solve(&rhs).unwrap();
            let exact = Field::from_fn(g, 1, |x, _| (PI * x[0]).sin());
            y.values()
                .iter()
                .zip(exact.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        // h = 1/16 → 1/32
        let (e1, e2) = (err(15), err(31));
        let ratio = e1 / e2;
        assert!(ratio > 3.8 && ratio < 4.2, "ratio {ratio}");
        assert!(e1 < 1.0 * (1.0 / 16.0f64).powi(2));
    }

    #[test]
    fn poisson_is_two_sided_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (d, n, k) in [(1, 20, 1), (2, 7, 1), (2, 5, 2)] {
            let grid = SpaceGrid::new(d, n).unwrap();
            let solver = PoissonSolver::new(grid, k).unwrap();
            let u = random_field(grid, k, &mut rng);
            let back = solver.solve(&laplacian(&u)).unwrap();
            let fwd = laplacian(&solver.solve(&u).unwrap());
            for i in 0..u.len() {
                assert!((back.values()[i] - u.values()[i]).abs() < 1e-10);
                assert!((fwd.values()[i] - u.values()[i]).abs() < 1e-10 * u.max_abs().max(1.0) * 1e2);
            }
        }
    }
}
