//! Adaptive isogeometric boundary element method for the Laplace equation
//! in two dimensions.
//!
//! The crate discretizes the weakly-singular and the hypersingular integral
//! equation on NURBS curves, refines adaptively with knot bisection and
//! multiplicity increase, and solves the Galerkin systems with conjugate
//! gradients preconditioned by local multilevel diagonal additive Schwarz
//! operators whose application costs `O(N)`.

pub mod adapt;
pub mod assembly;
pub mod basis;
pub mod geometry;
pub mod knotline;
pub mod krylov;
pub mod mlprecond;
pub mod quadrature;
pub mod xcli;

mod error;

pub use error::{Error, Result};
