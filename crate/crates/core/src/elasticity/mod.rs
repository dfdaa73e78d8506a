//! Two-region corotated elasticity.

mod assembly;
pub mod corotated;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Region;

pub use assembly::{
    elastic_force, flatten, force_jacobian, unflatten, ElasticModel, ElementPrecompute,
    JacobianDiagnostics, ParameterForces,
};
pub use corotated::{energy_density, first_piola, stress_derivative, Polar};

/// Default solid densities (kg/m³): platinum-cure silicone and acetal sheet.
pub const DEFAULT_BODY_DENSITY: f64 = 1070.0;
pub const DEFAULT_SPINE_DENSITY: f64 = 1410.0;

/// `μ = E / (2(1 + ν))`, `λ = Eν / ((1 + ν)(1 − 2ν))`.
pub fn lame_from_young_poisson(youngs: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(youngs > 0.0) || !youngs.is_finite() {
        return Err(Error::Material(format!(
            "Young's modulus must be positive, got {youngs}"
        )));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(Error::Material(format!(
            "Poisson ratio must lie in (-1, 0.5), got {poisson}"
        )));
    }
    let mu = youngs / (2.0 * (1.0 + poisson));
    let lambda = youngs * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    Ok((mu, lambda))
}

/// Partial derivatives `[[∂μ/∂E, ∂μ/∂ν], [∂λ/∂E, ∂λ/∂ν]]`.
pub fn lame_derivatives(youngs: f64, poisson: f64) -> [[f64; 2]; 2] {
    let (e, nu) = (youngs, poisson);
    let a = (1.0 + nu) * (1.0 - 2.0 * nu);
    [
        [
            1.0 / (2.0 * (1.0 + nu)),
            -e / (2.0 * (1.0 + nu) * (1.0 + nu)),
        ],
        [nu / a, e * (1.0 + 2.0 * nu * nu) / (a * a)],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
}

impl Material {
    pub fn lame(&self) -> Result<(f64, f64)> {
        lame_from_young_poisson(self.youngs_modulus, self.poisson_ratio)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSet {
    pub body: Material,
    pub spine: Material,
}

impl MaterialSet {
    pub fn get(&self, region: Region) -> &Material {
        match region {
            Region::Body => &self.body,
            Region::Spine => &self.spine,
        }
    }

    pub fn get_mut(&mut self, region: Region) -> &mut Material {
        match region {
            Region::Body => &mut self.body,
            Region::Spine => &mut self.spine,
        }
    }

    /// Lamé pairs indexed by [`Region::index`].
    pub fn lame(&self) -> Result<[(f64, f64); 2]> {
        Ok([self.body.lame()?, self.spine.lame()?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lame_zero_poisson() {
        assert_eq!(lame_from_young_poisson(1.0, 0.0).unwrap(), (0.5, 0.0));
    }

    #[test]
    fn lame_silicone_values() {
        let (mu, lambda) = lame_from_young_poisson(1.0e5, 0.49).unwrap();
        assert!((mu - 33557.046979865772).abs() < 1e-8);
        assert!((lambda - 1.6442953020134e6).abs() < 1e-3);
        let (mu, lambda) = lame_from_young_poisson(1.1e6, 0.49).unwrap();
        assert!((mu - 369127.5167785235).abs() < 1e-6);
        assert!((lambda - 1.808724832214765e7).abs() < 1e-2);
    }

    #[test]
    fn lame_rejects_incompressible() {
        assert!(lame_from_young_poisson(1.0, 0.5).is_err());
        assert!(lame_from_young_poisson(-1.0, 0.3).is_err());
    }

    #[test]
    fn lame_derivatives_match_finite_differences() {
        let (e, nu) = (2.0e5, 0.37);
        let d = lame_derivatives(e, nu);
        let (he, hn) = (1e-2, 1e-7);
        let (mp, lp) = lame_from_young_poisson(e + he, nu).unwrap();
        let (mm, lm) = lame_from_young_poisson(e - he, nu).unwrap();
        assert!(((mp - mm) / (2.0 * he) - d[0][0]).abs() < 1e-7 * d[0][0]);
        assert!(((lp - lm) / (2.0 * he) - d[1][0]).abs() < 1e-7 * d[1][0]);
        let (mp, lp) = lame_from_young_poisson(e, nu + hn).unwrap();
        let (mm, lm) = lame_from_young_poisson(e, nu - hn).unwrap();
        assert!(((mp - mm) / (2.0 * hn) - d[0][1]).abs() < 1e-6 * d[0][1].abs());
        assert!(((lp - lm) / (2.0 * hn) - d[1][1]).abs() < 1e-6 * d[1][1].abs());
    }
}
