//! Mixed finite elements for axisymmetric linear elasticity on the meridian
//! half-plane, with weakly imposed stress symmetry and grad-div stabilization.

pub mod assembly;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod poly;
pub mod projection;
pub mod quadrature;
pub mod spaces;

pub use error::{FemError, FieldBlock, Result};
