//! Krylov convergence laboratory.
//!
//! FOM and GMRES over real linear operators, with both direct and
//! recurrence-based residual norms, checks of the `√(k+1)` near-optimality
//! bound between them, and the Arnoldi method for `f(A)b`.

pub mod arnoldi;
pub mod bounds;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod matfunc;
pub mod operators;
pub mod report;
pub mod solvers;
pub mod svg;

pub use error::{LabError, Result};
