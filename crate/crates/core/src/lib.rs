//! Helmholtz transmission problems in two dimensions via a direct-indirect
//! mixed Burton–Miller boundary integral formulation.

pub mod error;
pub mod geometry;
pub mod linalg;
pub mod quadrature;
pub mod special_functions;
pub mod systems;
pub mod direct_solver;
pub mod fast_solver;
pub mod analytic_reference;
pub mod cli;
pub mod eigensolver;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
