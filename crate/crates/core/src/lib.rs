//! Numerical laboratory for the weighted anisotropic p-Laplace equation
//!
//! ```text
//! div(sigma |A grad u . grad u|^((p-2)/2) A grad u) = 0
//! ```
//!
//! on triangulated planar domains: a forward Dirichlet solver, the nonlinear
//! Dirichlet-to-Neumann pairing, the monotonicity sandwich between ordered
//! conductivities, perturbation and stability studies, and two-dimensional
//! complex-gradient diagnostics.

pub mod dnmap;
pub mod error;
pub mod expr;
pub mod fields;
pub mod forward;
pub mod geometry;
pub mod io;
mod linalg;
pub mod monotonicity;
pub mod perturbation;
pub mod ucp2d;

pub use error::{Error, Result};
pub use fields::{MatrixField, ScalarField, Sym2};
pub use forward::{DirichletProblem, Solution, SolverOptions};
pub use geometry::{build_structured_mesh, Mesh, NodalFunction, Rect};
