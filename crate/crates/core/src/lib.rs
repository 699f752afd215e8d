//! Numerical laboratory for boundary gradient blow-up of the viscous
//! Hamilton-Jacobi equation
//!
//! ```text
//! u_t - Δu = |∇u|^p,   p > 2,
//! ```
//!
//! on a rectangle `[-Lx, Lx] x [0, Ly]` with homogeneous Dirichlet data.
//! Solutions launched from data concentrated near the origin develop an
//! isolated gradient singularity at `(0, 0)` whose profile is anisotropic:
//! `u_y ~ d_p y^{-1/(p-1)}` along the normal and `u_y ~ |x|^{-2/(p-2)}` along
//! the boundary, with time rate `(T - t)^{-1/(p-2)}`.
//!
//! The crate is layered bottom-up:
//!
//! * [`profile_math`] - closed-form constants, steady states, the barrier
//!   supersolution and manufactured solutions, all with analytic derivatives;
//! * [`grid`] - the tensor grid, nodal fields, stencils and snapshot IO;
//! * [`initial_data`] - admissible initial data families;
//! * [`solver`] - explicit adaptive Heun integration with blow-up stopping;
//! * [`diagnostics`] - maximum-principle monitors and auxiliary functions;
//! * [`profile_fit`] - log-log exponent extraction;
//! * [`config`], [`rundir`], [`commands`] - run configuration, run
//!   directories and the operations behind the command-line front end.

pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod initial_data;
pub mod profile_fit;
pub mod profile_math;
pub mod rundir;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{Grid2D, ScalarField};
pub use profile_math::ProfileConstants;
