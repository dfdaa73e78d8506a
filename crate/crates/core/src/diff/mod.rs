//! Marker-matching loss and adjoint gradients with respect to material
//! parameters.

mod adjoint;
mod dataset;
mod params;

pub use adjoint::{grad_dynamic, grad_quasistatic, loss_dynamic, loss_quasistatic, LossGradient};
pub use dataset::{loss_markers, planar, MarkerDataset, Observation, Planar};
pub use params::{Param, ParamSet, ParamVector, POISSON_MAX};
