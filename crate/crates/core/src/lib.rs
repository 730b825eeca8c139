//! Solves nonlinear parabolic evolutions `dv/dt + Λ_t(u) + DΨ(λu) = 0` by
//! minimizing a nonnegative space-time energy whose zeros are exactly the
//! solutions, and checks the result against implicit Euler.

pub mod cli;
pub mod convex_core;
pub mod discretization;
pub mod energy;
pub mod error;
pub mod format;
mod linalg;
pub mod models;
pub mod solver;

pub use error::{Error, Result};
