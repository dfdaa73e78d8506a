//! Implicit-Euler dynamics and quasistatic equilibria under chamber
//! pressure.

mod chamber;
mod dynamics;
mod quasistatic;
mod schedule;

use serde::{Deserialize, Serialize};

use crate::elasticity::{ElasticModel, MaterialSet};
use crate::error::{Error, Result};
use crate::linalg::{Ldlt, SkylineMatrix};
use crate::mesh::{TetMesh, Vec3};

pub use chamber::{
    actuation_force, actuation_jacobian_mul, actuation_jacobian_transpose_mul,
    add_actuation_jacobian, chamber_force, chamber_volume, is_closed, ChamberForce,
};
pub use dynamics::{rollout, step, StepOutcome, StepReport, Substep, Trajectory};
pub use quasistatic::{quasistatic_solve, QuasistaticSolution};
pub use schedule::PressureSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Time step (s).
    pub h: f64,
    pub newton_max_iters: usize,
    /// Residual tolerance relative to the load scale of the step.
    pub rel_tol: f64,
    pub line_search_factor: f64,
    pub line_search_max_halvings: usize,
    /// How many times a step may be split in half after an inversion.
    pub max_step_retries: usize,
    /// Uniform body acceleration (m/s²); off by default.
    pub gravity: Option<[f64; 3]>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            h: 0.01,
            newton_max_iters: 50,
            rel_tol: 1e-6,
            line_search_factor: 0.5,
            line_search_max_halvings: 20,
            max_step_retries: 3,
            gravity: None,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("solver config: {m}")));
        if !(self.h > 0.0) || !self.h.is_finite() {
            return bad("h must be positive");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be positive");
        }
        if !(self.line_search_factor > 0.0 && self.line_search_factor < 1.0) {
            return bad("line_search_factor must lie in (0, 1)");
        }
        if self.newton_max_iters == 0 {
            return bad("newton_max_iters must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub t: f64,
}

impl SimState {
    pub fn rest(mesh: &TetMesh) -> Self {
        SimState {
            x: mesh.nodes.clone(),
            v: vec![Vec3::zeros(); mesh.nodes.len()],
            t: 0.0,
        }
    }
}

/// Multiple of machine epsilon applied to `ElasticModel::roundoff_scale`.
const FORCE_ROUNDOFF: f64 = 16.0 * f64::EPSILON;
const MAX_SHIFTS: usize = 12;

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Mesh-bound precomputation shared by stepping, equilibrium solves and
/// their adjoints.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub mesh: &'a TetMesh,
    pub model: ElasticModel,
    pub lame: [(f64, f64); 2],
    pub config: SolverConfig,
    /// Lumped mass per DOF.
    mass: Vec<f64>,
    /// Clamped flag per DOF.
    fixed: Vec<bool>,
    profile: SkylineMatrix,
    force_floor: f64,
    /// Every chamber surface is closed, so the static balance has a
    /// potential.
    closed_chambers: bool,
}

impl<'a> Simulator<'a> {
    pub fn new(mesh: &'a TetMesh, materials: &MaterialSet, config: &SolverConfig) -> Result<Self> {
        config.check()?;
        let model = ElasticModel::new(mesh, materials)?;
        let fixed = mesh.fixed_mask().iter().flat_map(|&f| [f, f, f]).collect();
        let lame = materials.lame()?;
        let force_floor = FORCE_ROUNDOFF * model.roundoff_scale(&lame);
        Ok(Simulator {
            mesh,
            mass: model.mass_diagonal(),
            model,
            lame,
            force_floor,
            config: config.clone(),
            fixed,
            profile: SkylineMatrix::for_mesh(mesh),
            closed_chambers: mesh.chambers.iter().all(is_closed),
        })
    }

    /// Force residuals below this are indistinguishable from rounding
    /// noise in the elastic forces.
    pub fn force_floor(&self) -> f64 {
        self.force_floor
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn fixed_dofs(&self) -> &[bool] {
        &self.fixed
    }

    pub fn zero_fixed(&self, v: &mut [f64]) {
        for (x, &f) in v.iter_mut().zip(&self.fixed) {
            if f {
                *x = 0.0;
            }
        }
    }

    /// Chamber loads plus gravity at `x`.
    pub fn external_force(&self, x: &[Vec3], pressures: &[f64]) -> Result<Vec<f64>> {
        let mut f = actuation_force(self.mesh, x, pressures)?;
        if let Some(g) = self.config.gravity {
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += self.mass[i] * g[i % 3];
            }
        }
        Ok(f)
    }

    pub fn elastic_force(&self, x: &[Vec3]) -> Result<Vec<f64>> {
        self.model.forces(x, &self.lame)
    }

    /// `M + h² K(x)` with `K = −∂f_ela/∂x`, clamped DOFs replaced by
    /// identity rows.
    pub fn newton_matrix(&self, x: &[Vec3], h: f64) -> Result<SkylineMatrix> {
        let mut a = self.profile.clone();
        a.add_diagonal(&self.mass);
        self.model
            .add_force_jacobian(x, &self.lame, -h * h, &mut a)?;
        a.constrain(&self.fixed);
        Ok(a)
    }

    /// Factors `a`, adding a growing diagonal shift on free DOFs until no
    /// pivot is negative. The flag reports whether a shift was needed.
    pub fn factor_positive(&self, a: SkylineMatrix) -> Result<(Ldlt, bool)> {
        let diag_scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut shift = 0.0;
        for _ in 0..MAX_SHIFTS {
            let mut shifted = a.clone();
            if shift > 0.0 {
                let d: Vec<f64> = self
                    .fixed
                    .iter()
                    .map(|&f| if f { 0.0 } else { shift })
                    .collect();
                shifted.add_diagonal(&d);
            }
            match shifted.factor() {
                Ok(f) if f.negative_pivots() == 0 => return Ok((f, shift > 0.0)),
                Ok(_) | Err(Error::Singular(_)) => {
                    shift = if shift == 0.0 {
                        1e-6 * diag_scale
                    } else {
                        4.0 * shift
                    };
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::Singular(
            "matrix stayed indefinite after shifting".into(),
        ))
    }

    /// Work potential of gravity, `Σ m g·x` over free DOFs.
    fn gravity_work(&self, x: &[Vec3]) -> f64 {
        let Some(g) = self.config.gravity else {
            return 0.0;
        };
        (0..3 * x.len())
            .filter(|&i| !self.fixed[i])
            .map(|i| self.mass[i] * g[i % 3] * x[i / 3][i % 3])
            .sum()
    }

    /// `E(x) − Σ p_c V_c(x) − Σ m g·x`, whose negative gradient is the
    /// static residual. `None` unless every chamber is closed.
    pub fn static_potential(&self, x: &[Vec3], pressures: &[f64]) -> Result<Option<f64>> {
        if !self.closed_chambers {
            return Ok(None);
        }
        let mut pi = self.model.energy(x, &self.lame)? - self.gravity_work(x);
        for (c, &p) in self.mesh.chambers.iter().zip(pressures) {
            if p != 0.0 {
                pi -= p * chamber_volume(self.mesh, x, c.id)?;
            }
        }
        Ok(Some(pi))
    }

    /// `K(x) − sym(∂f_act/∂x)`, the tangent of the static balance.
    pub fn static_tangent(&self, x: &[Vec3], pressures: &[f64]) -> Result<SkylineMatrix> {
        let mut a = self.profile.clone();
        self.model.add_force_jacobian(x, &self.lame, -1.0, &mut a)?;
        add_actuation_jacobian(self.mesh, x, pressures, -1.0, &mut a)?;
        a.constrain(&self.fixed);
        Ok(a)
    }
}
