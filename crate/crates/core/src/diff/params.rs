use std::fmt;

use serde::{Deserialize, Serialize};

use crate::elasticity::MaterialSet;
use crate::error::{Error, Result};
use crate::mesh::Region;

/// Upper end of the Poisson ratio range reachable through the logit map.
pub const POISSON_MAX: f64 = 0.5;

/// Logit arguments are clamped here so `ν` stays strictly inside
/// `(0, 0.5)` in floating point.
const LOGIT_CLAMP: f64 = 30.0;

/// A material parameter that can be identified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Param {
    EBody,
    ESpine,
    NuBody,
    NuSpine,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::EBody, Param::ESpine, Param::NuBody, Param::NuSpine];

    pub fn name(self) -> &'static str {
        match self {
            Param::EBody => "E_BODY",
            Param::ESpine => "E_SPINE",
            Param::NuBody => "NU_BODY",
            Param::NuSpine => "NU_SPINE",
        }
    }

    pub fn region(self) -> Region {
        match self {
            Param::EBody | Param::NuBody => Region::Body,
            Param::ESpine | Param::NuSpine => Region::Spine,
        }
    }

    pub fn is_poisson(self) -> bool {
        matches!(self, Param::NuBody | Param::NuSpine)
    }

    /// Natural value to optimizer space: `log10 E`, or `logit(ν / 0.5)`.
    pub fn transform(self, value: f64) -> f64 {
        if self.is_poisson() {
            (value / (POISSON_MAX - value)).ln()
        } else {
            value.log10()
        }
    }

    pub fn untransform(self, z: f64) -> f64 {
        if self.is_poisson() {
            let z = z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
            POISSON_MAX / (1.0 + (-z).exp())
        } else {
            10f64.powf(z)
        }
    }

    /// `d(natural) / d(transformed)` at the natural value.
    pub fn jacobian(self, value: f64) -> f64 {
        if self.is_poisson() {
            value * (POISSON_MAX - value) / POISSON_MAX
        } else {
            std::f64::consts::LN_10 * value
        }
    }

    pub fn check(self, value: f64) -> Result<()> {
        let ok = if self.is_poisson() {
            value > 0.0 && value < POISSON_MAX
        } else {
            value > 0.0 && value.is_finite()
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{} = {value} is outside its domain",
                self.name()
            )))
        }
    }

    pub fn read(self, materials: &MaterialSet) -> f64 {
        let m = materials.get(self.region());
        if self.is_poisson() {
            m.poisson_ratio
        } else {
            m.youngs_modulus
        }
    }

    fn write(self, materials: &mut MaterialSet, value: f64) {
        let m = materials.get_mut(self.region());
        if self.is_poisson() {
            m.poisson_ratio = value;
        } else {
            m.youngs_modulus = value;
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The canonical parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSet {
    /// `E_BODY, E_SPINE`.
    #[default]
    E2,
    /// `E_BODY, E_SPINE, NU_BODY, NU_SPINE`.
    E2Nu2,
}

impl ParamSet {
    pub fn params(self) -> &'static [Param] {
        match self {
            ParamSet::E2 => &Param::ALL[..2],
            ParamSet::E2Nu2 => &Param::ALL,
        }
    }
}

impl std::str::FromStr for ParamSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e2" => Ok(ParamSet::E2),
            "e2nu2" => Ok(ParamSet::E2Nu2),
            _ => Err(Error::InvalidArgument(format!(
                "unknown parameter set `{s}` (expected e2 or e2nu2)"
            ))),
        }
    }
}

/// Ordered parameter values in natural units (Pa, dimensionless).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    params: Vec<Param>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(params: &[Param], values: &[f64]) -> Result<Self> {
        if params.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} values",
                params.len(),
                values.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if params[..i].contains(p) {
                return Err(Error::InvalidArgument(format!("{p} listed twice")));
            }
        }
        for (p, v) in params.iter().zip(values) {
            p.check(*v)?;
        }
        Ok(ParamVector {
            params: params.to_vec(),
            values: values.to_vec(),
        })
    }

    pub fn from_materials(set: ParamSet, materials: &MaterialSet) -> Result<Self> {
        let params = set.params();
        let values: Vec<f64> = params.iter().map(|p| p.read(materials)).collect();
        Self::new(params, &values)
    }

    pub fn from_transformed(params: &[Param], z: &[f64]) -> Result<Self> {
        let values: Vec<f64> = params.iter().zip(z).map(|(p, z)| p.untransform(*z)).collect();
        if values.len() != z.len() {
            return Err(Error::Shape(format!("{} parameters but {} values", params.len(), z.len())));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("untransformed parameter {v}")));
        }
        Self::new(params, &values)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn transformed(&self) -> Vec<f64> {
        self.params.iter().zip(&self.values).map(|(p, v)| p.transform(*v)).collect()
    }

    /// `base` with these parameters written in.
    pub fn apply(&self, base: &MaterialSet) -> Result<MaterialSet> {
        let mut m = *base;
        for (p, v) in self.params.iter().zip(&self.values) {
            p.write(&mut m, *v);
        }
        m.lame()?;
        Ok(m)
    }

    /// Gradient in optimizer space from a gradient in natural units.
    pub fn chain(&self, natural: &[f64]) -> Vec<f64> {
        self.params
            .iter()
            .zip(&self.values)
            .zip(natural)
            .map(|((p, v), g)| g * p.jacobian(*v))
            .collect()
    }
}
