//! Finite-dimensional evolution triple on a uniform Dirichlet grid.
//!
//! * `X`: nodal fields normed by `‖∇u‖_{L^q}` over cells.
//! * `H`: the same nodal values with the `h^d`-weighted Euclidean product.
//! * `X*`: nodal vectors `y` acting through `⟨u, y⟩ = h^d Σ u·y`.
//!
//! With this representation the inclusion `I = T̃∘T` is the identity map on
//! nodal vectors, so `dv/dt` is the plain difference quotient of states.

mod field;
mod grid;
mod operators;
mod trajectory;

pub use field::Field;
pub use grid::SpaceGrid;
pub use operators::{
    discrete_gradient, gradient_transpose, laplacian, poisson_solve, EdgeVectors, PoissonSolver,
};
pub(crate) use operators::{
    edge_average_into, edge_average_transpose_add, gradient_into, gradient_transpose_into,
};
pub use trajectory::{midpoint_pairing, paired_time_derivative, Trajectory};
pub(crate) use trajectory::read_rows;
