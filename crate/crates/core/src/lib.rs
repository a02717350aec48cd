//! Numerical laboratory for entropic dynamics.
//!
//! A particle diffuses under the maximum-entropy step law built from an
//! entropy field `S(x)`. The crate realizes that dynamics four ways and
//! lets them be compared against each other:
//!
//! * [`kernel`]: exact and Gaussian single-step transition kernels, and the
//!   multiplier that fixes the mean squared step length;
//! * [`ensemble`] and [`propagation`]: Wiener-process walker ensembles,
//!   Chapman–Kolmogorov density propagation and the Bayes-reversed kernel;
//! * [`hydro`]: the coupled density/phase (Madelung) field equations with
//!   their conserved energy and the classical Hamilton–Jacobi limit;
//! * [`schrodinger`]: Crank–Nicolson and split-step Schrödinger solvers
//!   with closed-form reference states.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod field;
pub mod grid;
pub mod hydro;
pub mod io;
pub mod kernel;
pub mod propagation;
pub mod rng;
pub mod schrodinger;
pub mod tridiag;

pub use constants::PhysicalConstants;
pub use error::{Error, Result};
pub use exec::Execution;
pub use field::{gradient, integrate, normalize_density, FieldRole, ScalarField, DENSITY_FLOOR};
pub use grid::{Boundary, SpatialGrid};
