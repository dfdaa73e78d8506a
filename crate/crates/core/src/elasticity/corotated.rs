//! Corotated energy density `Ψ(F) = μ‖U − I‖²_F + λ/2 tr²(U − I)` with
//! `F = RU`, its first Piola–Kirchhoff stress and the exact stress
//! derivative `∂P/∂F`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Pairs of singular values whose sum drops below this make `∂R/∂F`
/// unreliable.
pub const ROTATION_GAP_TOLERANCE: f64 = 1e-8;

/// Rotation-invariant SVD `F = U Σ Vᵀ` with `det U = det V = +1`.
#[derive(Debug, Clone, Copy)]
pub struct Polar {
    pub u: Matrix3<f64>,
    pub sigma: Vector3<f64>,
    pub v: Matrix3<f64>,
}

impl Polar {
    pub fn new(f: &Matrix3<f64>) -> Result<Self> {
        let det = f.determinant();
        if !(det > 0.0) {
            return Err(Error::InvertedDeformation(det));
        }
        let svd = f.svd(true, true);
        let mut u = svd.u.expect("svd u");
        let mut v = svd.v_t.expect("svd v").transpose();
        let sigma = svd.singular_values;
        if u.determinant() < 0.0 {
            // det F > 0, so V is improper too; flipping the weakest
            // direction in both keeps U Σ Vᵀ unchanged.
            let k = sigma.imin();
            u.column_mut(k).neg_mut();
            v.column_mut(k).neg_mut();
        }
        Ok(Polar { u, sigma, v })
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.u * self.v.transpose()
    }

    /// Symmetric stretch tensor `U = V Σ Vᵀ`.
    pub fn stretch(&self) -> Matrix3<f64> {
        self.v * Matrix3::from_diagonal(&self.sigma) * self.v.transpose()
    }

    /// Smallest `σ_m + σ_n` over the three pairs.
    pub fn min_pair_sum(&self) -> f64 {
        let s = self.sigma;
        (s[0] + s[1]).min(s[0] + s[2]).min(s[1] + s[2])
    }
}

pub fn energy_density(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Result<f64> {
    let p = Polar::new(f)?;
    Ok(energy_from_singular_values(&p.sigma, mu, lambda))
}

pub(crate) fn energy_from_singular_values(sigma: &Vector3<f64>, mu: f64, lambda: f64) -> f64 {
    let dev: f64 = sigma.iter().map(|s| (s - 1.0) * (s - 1.0)).sum();
    let tr = sigma.sum() - 3.0;
    mu * dev + 0.5 * lambda * tr * tr
}

/// The stress is linear in the Lamé parameters: `P = μ·P_μ + λ·P_λ`.
#[derive(Debug, Clone, Copy)]
pub struct StressBasis {
    pub per_mu: Matrix3<f64>,
    pub per_lambda: Matrix3<f64>,
}

impl StressBasis {
    pub fn from_polar(f: &Matrix3<f64>, p: &Polar) -> Self {
        let r = p.rotation();
        StressBasis {
            per_mu: 2.0 * (f - r),
            per_lambda: (p.sigma.sum() - 3.0) * r,
        }
    }

    pub fn stress(&self, mu: f64, lambda: f64) -> Matrix3<f64> {
        mu * self.per_mu + lambda * self.per_lambda
    }
}

pub fn first_piola(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Result<Matrix3<f64>> {
    let p = Polar::new(f)?;
    Ok(StressBasis::from_polar(f, &p).stress(mu, lambda))
}

/// `∂P_ij/∂F_kl` as a 9×9 array indexed by `3i + j` and `3k + l`.
///
/// `dP = 2μ dF + (λ(tr U − 3) − 2μ) dR + λ (R : dF) R`, where
/// `dR = Σ_{m<n} 2/(σ_m + σ_n) Q_mn (Q_mn : dF)` with the twist modes
/// `Q_mn = U (e_m e_nᵀ − e_n e_mᵀ) Vᵀ / √2`.
pub fn stress_derivative_from_polar(p: &Polar, mu: f64, lambda: f64) -> [[f64; 9]; 9] {
    let r = p.rotation();
    let c = lambda * (p.sigma.sum() - 3.0) - 2.0 * mu;
    let mut h = [[0.0; 9]; 9];
    for (a, row) in h.iter_mut().enumerate() {
        row[a] = 2.0 * mu;
    }
    let rv: [f64; 9] = std::array::from_fn(|k| r[(k / 3, k % 3)]);
    for a in 0..9 {
        for b in 0..9 {
            h[a][b] += lambda * rv[a] * rv[b];
        }
    }
    let (u, v, s) = (&p.u, &p.v, &p.sigma);
    for (m, n) in [(0, 1), (0, 2), (1, 2)] {
        let weight = c * 2.0 / (s[m] + s[n]);
        let q: [f64; 9] = std::array::from_fn(|k| {
            let (i, j) = (k / 3, k % 3);
            (u[(i, m)] * v[(j, n)] - u[(i, n)] * v[(j, m)]) * std::f64::consts::FRAC_1_SQRT_2
        });
        for a in 0..9 {
            for b in 0..9 {
                h[a][b] += weight * q[a] * q[b];
            }
        }
    }
    h
}

pub fn stress_derivative(f: &Matrix3<f64>, mu: f64, lambda: f64) -> Result<[[f64; 9]; 9]> {
    Ok(stress_derivative_from_polar(&Polar::new(f)?, mu, lambda))
}
