//! Flux-mortar mixed finite elements for Darcy flow in fractured porous
//! media represented as a mixed-dimensional hierarchy of flat simplicial
//! subdomains.
//!
//! The pipeline is `meshdim` (geometry and coefficients) → `spaces` (degrees
//! of freedom and inter-grid operators) → `assembly` (saddle-point system) →
//! `solver` → `verify` (norms and convergence studies).

pub mod assembly;
pub mod error;
pub mod geometry;
pub mod meshdim;
pub mod solver;
pub mod spaces;
pub mod sparse;
pub mod verify;
pub mod vtk;

pub use error::{Error, Result};
