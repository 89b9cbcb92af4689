//! Numerical laboratory for Sobolev–Poincaré inequalities with variable
//! exponents on John domains.
//!
//! Everything lives on dyadic grids: domains are cell masks with exact
//! distance fields, exponents and functions are cellwise constant, and
//! integrals are midpoint sums.

pub mod counterexample;
pub mod decomposition;
pub mod error;
pub mod exponent;
pub mod geometry;
pub mod inequality_lab;
pub mod io;
pub mod norm;
pub mod operators;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
