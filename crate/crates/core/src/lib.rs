//! Differentiable corotated FEM for composite pneumatic actuators, with
//! material identification and hydrodynamic thrust models.

pub mod diff;
pub mod elasticity;
pub mod error;
pub mod harness;
pub mod hydrodynamics;
pub mod identification;
pub mod integrator;
pub mod linalg;
pub mod mesh;
pub mod presets;

pub use error::{Error, Result};
