use nalgebra::{Matrix3, Vector3};

use super::corotated::{
    energy_from_singular_values, stress_derivative_from_polar, Polar, StressBasis,
    ROTATION_GAP_TOLERANCE,
};
use super::MaterialSet;
use crate::error::{Error, Result};
use crate::linalg::{tet_dofs, Assemble, CsrMatrix, TripletMatrix};
use crate::mesh::{Region, TetMesh, Vec3};

pub fn flatten(x: &[Vec3]) -> Vec<f64> {
    x.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

pub fn unflatten(x: &[f64]) -> Vec<Vec3> {
    x.chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ElementPrecompute {
    /// Inverse of the rest edge matrix `[X1 − X0, X2 − X0, X3 − X0]`.
    pub rest_inverse: Matrix3<f64>,
    pub volume: f64,
    /// `∂F/∂x_a = I ⊗ grads[a]`.
    pub grads: [Vector3<f64>; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JacobianDiagnostics {
    /// Elements whose block came from symmetrized finite differences
    /// because two singular values nearly cancelled.
    pub fd_fallback_elements: Vec<usize>,
}

/// Elastic forces split by region and Lamé parameter:
/// `f = Σ_r μ_r · per_mu[r] + λ_r · per_lambda[r]`.
#[derive(Debug, Clone)]
pub struct ParameterForces {
    pub per_mu: [Vec<f64>; 2],
    pub per_lambda: [Vec<f64>; 2],
}

impl ParameterForces {
    /// `wᵀ ∂f/∂(μ_r, λ_r)` as `[region][0 = μ, 1 = λ]`.
    pub fn contract(&self, w: &[f64]) -> [[f64; 2]; 2] {
        let dot = |a: &[f64]| a.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
        [
            [dot(&self.per_mu[0]), dot(&self.per_lambda[0])],
            [dot(&self.per_mu[1]), dot(&self.per_lambda[1])],
        ]
    }
}

/// Per-element rest data and lumped masses for one mesh.
#[derive(Debug, Clone)]
pub struct ElasticModel {
    pub elements: Vec<ElementPrecompute>,
    /// Lumped nodal masses (kg).
    pub node_mass: Vec<f64>,
    tets: Vec<[usize; 4]>,
    regions: Vec<Region>,
}

impl ElasticModel {
    pub fn new(mesh: &TetMesh, materials: &MaterialSet) -> Result<Self> {
        let mut elements = Vec::with_capacity(mesh.tets.len());
        let mut node_mass = vec![0.0; mesh.nodes.len()];
        for (t, tet) in mesh.tets.iter().enumerate() {
            let p = mesh.tet_positions(&mesh.nodes, t);
            let dm = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
            let volume = dm.determinant() / 6.0;
            if !(volume > 0.0) {
                return Err(Error::InvertedElement {
                    tet: t,
                    det: volume,
                });
            }
            let rest_inverse = dm
                .try_inverse()
                .ok_or(Error::InvertedElement { tet: t, det: 0.0 })?;
            let r1: Vector3<f64> = rest_inverse.row(0).transpose();
            let r2: Vector3<f64> = rest_inverse.row(1).transpose();
            let r3: Vector3<f64> = rest_inverse.row(2).transpose();
            let grads = [-(r1 + r2 + r3), r1, r2, r3];
            let density = materials.get(mesh.regions[t]).density;
            for &n in tet {
                node_mass[n] += density * volume / 4.0;
            }
            elements.push(ElementPrecompute {
                rest_inverse,
                volume,
                grads,
            });
        }
        Ok(ElasticModel {
            elements,
            node_mass,
            tets: mesh.tets.clone(),
            regions: mesh.regions.clone(),
        })
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.node_mass.len()
    }

    /// Diagonal of the lumped mass matrix per DOF.
    pub fn mass_diagonal(&self) -> Vec<f64> {
        self.node_mass.iter().flat_map(|&m| [m, m, m]).collect()
    }

    pub fn deformation_gradient(&self, x: &[Vec3], tet: usize) -> Matrix3<f64> {
        let t = self.tets[tet];
        let ds = Matrix3::from_columns(&[x[t[1]] - x[t[0]], x[t[2]] - x[t[0]], x[t[3]] - x[t[0]]]);
        ds * self.elements[tet].rest_inverse
    }

    fn polar(&self, x: &[Vec3], tet: usize) -> Result<(Matrix3<f64>, Polar)> {
        let f = self.deformation_gradient(x, tet);
        match Polar::new(&f) {
            Ok(p) => Ok((f, p)),
            Err(Error::InvertedDeformation(det)) => Err(Error::InvertedElement { tet, det }),
            Err(e) => Err(e),
        }
    }

    /// Total elastic energy `Σ_e V_e Ψ(F_e)`.
    pub fn energy(&self, x: &[Vec3], lame: &[(f64, f64); 2]) -> Result<f64> {
        let mut total = 0.0;
        for t in 0..self.tets.len() {
            let (_, p) = self.polar(x, t)?;
            let (mu, lambda) = lame[self.regions[t].index()];
            total += self.elements[t].volume * energy_from_singular_values(&p.sigma, mu, lambda);
        }
        Ok(total)
    }

    /// Largest per-DOF sum of `(2μ + 3λ) V |g_a|` over incident elements.
    /// Nodal forces carry rounding error of order `ε` times this, whatever
    /// the deformation.
    pub fn roundoff_scale(&self, lame: &[(f64, f64); 2]) -> f64 {
        let mut acc = vec![0.0; self.node_mass.len()];
        for (t, tet) in self.tets.iter().enumerate() {
            let (mu, lambda) = lame[self.regions[t].index()];
            let e = &self.elements[t];
            for a in 0..4 {
                acc[tet[a]] += (2.0 * mu + 3.0 * lambda.abs()) * e.volume * e.grads[a].norm();
            }
        }
        acc.into_iter().fold(0.0, f64::max)
    }

    /// `true` when any element has `det F ≤ 0` at `x`.
    pub fn any_inverted(&self, x: &[Vec3]) -> Option<usize> {
        (0..self.tets.len()).find(|&t| !(self.deformation_gradient(x, t).determinant() > 0.0))
    }

    fn scatter(
        out: &mut [f64],
        tet: &[usize; 4],
        grads: &[Vector3<f64>; 4],
        stress: &Matrix3<f64>,
        scale: f64,
    ) {
        for a in 0..4 {
            let fa = stress * grads[a] * scale;
            for k in 0..3 {
                out[3 * tet[a] + k] += fa[k];
            }
        }
    }

    /// Nodal elastic forces `−∂E/∂x`, flattened per DOF.
    pub fn forces(&self, x: &[Vec3], lame: &[(f64, f64); 2]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.num_dofs()];
        for t in 0..self.tets.len() {
            let (f, p) = self.polar(x, t)?;
            let (mu, lambda) = lame[self.regions[t].index()];
            let stress = StressBasis::from_polar(&f, &p).stress(mu, lambda);
            let e = &self.elements[t];
            Self::scatter(&mut out, &self.tets[t], &e.grads, &stress, -e.volume);
        }
        Ok(out)
    }

    pub fn parameter_forces(&self, x: &[Vec3]) -> Result<ParameterForces> {
        let n = self.num_dofs();
        let mut per_mu = [vec![0.0; n], vec![0.0; n]];
        let mut per_lambda = [vec![0.0; n], vec![0.0; n]];
        for t in 0..self.tets.len() {
            let (f, p) = self.polar(x, t)?;
            let basis = StressBasis::from_polar(&f, &p);
            let e = &self.elements[t];
            let r = self.regions[t].index();
            Self::scatter(
                &mut per_mu[r],
                &self.tets[t],
                &e.grads,
                &basis.per_mu,
                -e.volume,
            );
            Self::scatter(
                &mut per_lambda[r],
                &self.tets[t],
                &e.grads,
                &basis.per_lambda,
                -e.volume,
            );
        }
        Ok(ParameterForces { per_mu, per_lambda })
    }

    fn element_force(
        &self,
        tet: usize,
        local: &[Vec3; 4],
        mu: f64,
        lambda: f64,
    ) -> Result<[f64; 12]> {
        let e = &self.elements[tet];
        let ds = Matrix3::from_columns(&[
            local[1] - local[0],
            local[2] - local[0],
            local[3] - local[0],
        ]);
        let f = ds * e.rest_inverse;
        let p = Polar::new(&f).map_err(|_| Error::InvertedElement {
            tet,
            det: f.determinant(),
        })?;
        let stress = StressBasis::from_polar(&f, &p).stress(mu, lambda);
        let mut out = [0.0; 12];
        for a in 0..4 {
            let fa = stress * e.grads[a] * (-e.volume);
            for k in 0..3 {
                out[3 * a + k] = fa[k];
            }
        }
        Ok(out)
    }

    /// 12×12 block `∂f_e/∂x_e` for one element.
    fn element_jacobian(
        &self,
        x: &[Vec3],
        tet: usize,
        lame: &[(f64, f64); 2],
    ) -> Result<([[f64; 12]; 12], bool)> {
        let (_, p) = self.polar(x, tet)?;
        let (mu, lambda) = lame[self.regions[tet].index()];
        let e = &self.elements[tet];
        let mut block = [[0.0; 12]; 12];
        if p.min_pair_sum() < ROTATION_GAP_TOLERANCE {
            let t = self.tets[tet];
            let base = [x[t[0]], x[t[1]], x[t[2]], x[t[3]]];
            let h = 1e-7 * e.volume.cbrt();
            for col in 0..12 {
                let mut plus = base;
                let mut minus = base;
                plus[col / 3][col % 3] += h;
                minus[col / 3][col % 3] -= h;
                let fp = self.element_force(tet, &plus, mu, lambda)?;
                let fm = self.element_force(tet, &minus, mu, lambda)?;
                for row in 0..12 {
                    block[row][col] = (fp[row] - fm[row]) / (2.0 * h);
                }
            }
            for i in 0..12 {
                for j in 0..i {
                    let s = 0.5 * (block[i][j] + block[j][i]);
                    block[i][j] = s;
                    block[j][i] = s;
                }
            }
            return Ok((block, true));
        }
        let hess = stress_derivative_from_polar(&p, mu, lambda);
        let g = &e.grads;
        for a in 0..4 {
            for b in 0..4 {
                for i in 0..3 {
                    for k in 0..3 {
                        let mut s = 0.0;
                        for j in 0..3 {
                            let row = &hess[3 * i + j];
                            for l in 0..3 {
                                s += row[3 * k + l] * g[a][j] * g[b][l];
                            }
                        }
                        block[3 * a + i][3 * b + k] = -e.volume * s;
                    }
                }
            }
        }
        Ok((block, false))
    }

    /// Adds `scale · ∂f/∂x` into `sink`.
    pub fn add_force_jacobian<A: Assemble>(
        &self,
        x: &[Vec3],
        lame: &[(f64, f64); 2],
        scale: f64,
        sink: &mut A,
    ) -> Result<JacobianDiagnostics> {
        let mut diag = JacobianDiagnostics::default();
        for t in 0..self.tets.len() {
            let (mut block, fallback) = self.element_jacobian(x, t, lame)?;
            if fallback {
                diag.fd_fallback_elements.push(t);
            }
            if scale != 1.0 {
                block.iter_mut().flatten().for_each(|v| *v *= scale);
            }
            sink.add_block(&tet_dofs(&self.tets[t]), &block);
        }
        Ok(diag)
    }

    pub fn force_jacobian(
        &self,
        x: &[Vec3],
        lame: &[(f64, f64); 2],
    ) -> Result<(CsrMatrix, JacobianDiagnostics)> {
        let mut m = TripletMatrix::new(self.num_dofs());
        let diag = self.add_force_jacobian(x, lame, 1.0, &mut m)?;
        Ok((m.to_csr(), diag))
    }
}

/// Elastic nodal forces for positions `x`.
pub fn elastic_force(mesh: &TetMesh, x: &[Vec3], materials: &MaterialSet) -> Result<Vec<f64>> {
    let model = ElasticModel::new(mesh, materials)?;
    model.forces(x, &materials.lame()?)
}

/// Sparse `∂f_ela/∂x` (both triangles stored).
pub fn force_jacobian(
    mesh: &TetMesh,
    x: &[Vec3],
    materials: &MaterialSet,
) -> Result<(CsrMatrix, JacobianDiagnostics)> {
    let model = ElasticModel::new(mesh, materials)?;
    model.force_jacobian(x, &materials.lame()?)
}
