//! Reading recorded trials back in.

use std::path::{Path, PathBuf};

use super::config::NotchConfig;
use crate::error::{Error, Result};
use crate::hydrodynamics::ThrustTrial;

/// Normalized biquad `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Notch at `frequency` Hz with quality `q` for sampling period `dt`.
    pub fn notch(frequency: f64, q: f64, dt: f64) -> Result<Self> {
        let nyquist = 0.5 / dt;
        if !(frequency > 0.0 && frequency < nyquist) || !(q > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "notch at {frequency} Hz with q {q} needs 0 < f < {nyquist} Hz and q > 0"
            )));
        }
        let w0 = 2.0 * std::f64::consts::PI * frequency * dt;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        let c = -2.0 * w0.cos() / a0;
        Ok(Biquad {
            b: [1.0 / a0, c, 1.0 / a0],
            a: [c, (1.0 - alpha) / a0],
        })
    }

    /// Transposed direct form II, started in the steady state of a
    /// constant input equal to the first sample.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let Some(&x0) = x.first() else {
            return Vec::new();
        };
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let y0 = dc * x0;
        let (mut z1, mut z2) = (y0 - b0 * x0, b2 * x0 - a2 * y0);
        x.iter()
            .map(|&v| {
                let y = b0 * v + z1;
                z1 = b1 * v - a1 * y + z2;
                z2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }

    /// Forward then backward pass: zero phase, squared magnitude.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.filter(x);
        y.reverse();
        let mut y = self.filter(&y);
        y.reverse();
        y
    }
}

/// Parses and validates one trial table, optionally notching the force
/// channel.
pub fn ingest_trial(path: impl AsRef<Path>, notch: Option<&NotchConfig>) -> Result<ThrustTrial> {
    let mut trial = ThrustTrial::load(path)?;
    if let Some(n) = notch {
        trial.force = Biquad::notch(n.frequency, n.q, trial.sample_period)?.filtfilt(&trial.force);
    }
    Ok(trial)
}

/// Every `*.csv` file in `dir`, in file-name order.
pub fn trial_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no trial files in {}", dir.display())));
    }
    Ok(paths)
}

pub fn load_trial_dir(dir: &Path, notch: Option<&NotchConfig>) -> Result<Vec<ThrustTrial>> {
    trial_paths(dir)?.iter().map(|p| ingest_trial(p, notch)).collect()
}
