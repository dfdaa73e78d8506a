use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lumped mass, damping and stiffness between the fish and the load cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadCellParams {
    pub m: f64,
    pub b: f64,
    pub k: f64,
}

impl Default for LoadCellParams {
    fn default() -> Self {
        LoadCellParams { m: 0.5, b: 2.0, k: 200.0 }
    }
}

impl LoadCellParams {
    pub fn check(&self) -> Result<()> {
        for (name, v) in [("m", self.m), ("b", self.b), ("k", self.k)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("load cell {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// `|H(iω)|` of `(bs + k) / (ms² + bs + k)`.
    pub fn gain(&self, omega: f64) -> f64 {
        let num = (self.k * self.k + (self.b * omega).powi(2)).sqrt();
        let den = ((self.k - self.m * omega * omega).powi(2) + (self.b * omega).powi(2)).sqrt();
        num / den
    }
}

/// Measured force for a hydrodynamic force series sampled every `h`.
/// Integrates `m z̈ + b ż + k z = f` with the trapezoidal rule from rest
/// and reports `b ż + k z`.
pub fn load_cell_response(force: &[f64], params: &LoadCellParams, h: f64) -> Result<Vec<f64>> {
    params.check()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("sample period must be positive, got {h}")));
    }
    if let Some(i) = force.iter().position(|f| !f.is_finite()) {
        return Err(Error::NonFinite(format!("load cell input sample {i} is {}", force[i])));
    }
    let LoadCellParams { m, b, k } = *params;
    let a = Matrix2::new(0.0, 1.0, -k / m, -b / m);
    let half = 0.5 * h;
    let lhs = (Matrix2::identity() - a * half)
        .try_inverse()
        .ok_or_else(|| Error::Singular("load cell step matrix".into()))?;
    let rhs = Matrix2::identity() + a * half;
    let mut s = Vector2::zeros();
    let mut out = Vec::with_capacity(force.len());
    for (i, f) in force.iter().enumerate() {
        if i > 0 {
            let drive = Vector2::new(0.0, half * (force[i - 1] + f) / m);
            s = lhs * (rhs * s + drive);
        }
        out.push(b * s[1] + k * s[0]);
    }
    Ok(out)
}
