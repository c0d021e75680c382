//! P1 finite elements for `div(K grad u) = f` on the unit square.
//!
//! Dirichlet data on `x1 = 0` and `x1 = 1`, zero flux on `x2 = 0` and
//! `x2 = 1`. Meshes are dyadic (`h = 2^-l`) and nested across levels, which
//! the multigrid solver and the level-to-level L2 comparisons rely on.

mod linalg;
mod mesh;
mod observe;
mod solve;

pub use mesh::{build_mesh, CoefficientField, Mesh, MeshLevel};
pub use observe::{l2_error_against, l2_norm_difference, observe, ObservationLayout};
pub use solve::{
    assemble_and_solve, solve_with, stiffness_is_spd, BoundarySpec, FemSolution, SolverChoice,
    CG_TOLERANCE, DIRECT_SOLVE_MAX_LEVEL,
};

/// Right-hand side of the elliptic experiment, `cos(2 pi x1) sin(2 pi x2)`.
pub fn experiment_source(x: [f64; 2]) -> f64 {
    use std::f64::consts::TAU;
    (TAU * x[0]).cos() * (TAU * x[1]).sin()
}
