use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WATER_DENSITY: f64 = 1000.0;
/// Depth of the preset tails (m).
pub const DEFAULT_DEPTH: f64 = 0.02;

/// Fluid density and tail cross-sectional depth for Lighthill's virtual
/// mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EbtParams {
    pub rho: f64,
    pub depth: f64,
}

impl Default for EbtParams {
    fn default() -> Self {
        EbtParams {
            rho: WATER_DENSITY,
            depth: DEFAULT_DEPTH,
        }
    }
}

impl EbtParams {
    pub fn new(rho: f64, depth: f64) -> Result<Self> {
        let p = EbtParams { rho, depth };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidArgument(format!("fluid density must be positive, got {}", self.rho)));
        }
        if !(self.depth >= 0.0) || !self.depth.is_finite() {
            return Err(Error::InvalidArgument(format!("depth must be nonnegative, got {}", self.depth)));
        }
        Ok(())
    }

    pub fn virtual_mass(&self) -> f64 {
        virtual_mass(self.rho, self.depth)
    }
}

/// Added mass per unit length, `¼ π ρ s²`.
pub fn virtual_mass(rho: f64, depth: f64) -> f64 {
    0.25 * std::f64::consts::PI * rho * depth * depth
}

/// Reduced elongated-body thrust `½ m ẋ²` from the lateral velocity of
/// the tail tip.
pub fn ebt_thrust(lateral_velocity: f64, virtual_mass: f64) -> f64 {
    0.5 * virtual_mass * lateral_velocity * lateral_velocity
}

pub fn time_averaged_thrust(lateral_velocity: &[f64], virtual_mass: f64) -> Result<f64> {
    if lateral_velocity.is_empty() {
        return Err(Error::InvalidArgument("time average of an empty velocity series".into()));
    }
    let sum: f64 = lateral_velocity.iter().map(|v| ebt_thrust(*v, virtual_mass)).sum();
    Ok(sum / lateral_velocity.len() as f64)
}
