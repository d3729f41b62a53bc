//! Finite element pipeline for the Poisson problem plus a classical,
//! statevector-level simulation of a quantum estimator for linear functionals
//! of the discrete solution.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod assembly;
pub mod budget;
pub mod convergence;
pub mod error;
pub mod lower_bounds;
pub mod mesh;
pub mod poly;
pub mod problem;
pub mod quadrature;
pub mod quantum;
pub mod resources;
pub mod solver;
pub mod sparse;
pub mod spai;

pub use error::{FemError, Result};

/// Library version, embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
