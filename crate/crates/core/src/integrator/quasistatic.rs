use super::dynamics::Merit;
use super::{dot, inf_norm, two_norm, Simulator, SolverConfig};
use crate::elasticity::MaterialSet;
use crate::error::{Error, Result};
use crate::mesh::{TetMesh, Vec3};

/// Load increments are never split finer than this fraction.
const MIN_LOAD_INCREMENT: f64 = 1.0 / 256.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QuasistaticSolution {
    pub x: Vec<Vec3>,
    pub markers: Vec<Vec3>,
    pub iterations: usize,
    /// `‖f_ela + f_act‖∞` over free DOFs at `x`.
    pub residual: f64,
    pub tolerance: f64,
    pub load_steps: usize,
    /// Set when a Newton tangent had negative pivots and had to be shifted;
    /// the equilibrium may then not be unique.
    pub indefinite: bool,
}

impl Simulator<'_> {
    /// `f_ela(x) + f_act(x)` on free DOFs.
    pub fn static_residual(&self, x: &[Vec3], pressures: &[f64]) -> Result<Vec<f64>> {
        let fe = self.elastic_force(x)?;
        let fa = self.external_force(x, pressures)?;
        let mut r: Vec<f64> = fe.iter().zip(&fa).map(|(a, b)| a + b).collect();
        self.zero_fixed(&mut r);
        Ok(r)
    }

    fn load_scale(&self, x: &[Vec3], pressures: &[f64]) -> Result<f64> {
        let mut f = self.external_force(x, pressures)?;
        self.zero_fixed(&mut f);
        Ok(inf_norm(&f))
    }

    fn equilibrium_newton(
        &self,
        x0: &[Vec3],
        pressures: &[f64],
        tolerance: f64,
        indefinite: &mut bool,
    ) -> Result<(Vec<Vec3>, usize)> {
        let max_iters = self.config.newton_max_iters;
        let mut x = x0.to_vec();
        let mut r = self.static_residual(&x, pressures)?;
        let mut history = vec![inf_norm(&r)];
        for iter in 0..max_iters {
            if inf_norm(&r) <= tolerance {
                return Ok((x, iter));
            }
            let (factors, shifted) = self.factor_positive(self.static_tangent(&x, pressures)?)?;
            *indefinite |= shifted;
            let dx = factors.solve(&r);
            let merit = Merit {
                potential: self.static_potential(&x, pressures)?,
                slope: -dot(&r, &dx),
                norm: two_norm(&r),
            };
            let (xn, rn) = self.line_search(&x, &dx, merit, |trial| {
                Ok((
                    self.static_potential(trial, pressures)?,
                    self.static_residual(trial, pressures)?,
                ))
            })?;
            x = xn;
            r = rn;
            history.push(inf_norm(&r));
        }
        let res = inf_norm(&r);
        if res <= tolerance {
            return Ok((x, max_iters));
        }
        Err(Error::NonConvergence {
            iters: max_iters,
            residual: res,
            tolerance,
            history,
        })
    }

    /// Static equilibrium under constant pressures, starting from rest.
    ///
    /// The follower load is part of the Newton tangent, so the balance
    /// `f_ela(x) + f_act(x) = 0` is solved directly. If Newton fails at full
    /// load, the load is applied in smaller increments.
    pub fn quasistatic(&self, pressures: &[f64]) -> Result<QuasistaticSolution> {
        self.quasistatic_from(&self.mesh.nodes, pressures)
    }

    pub fn quasistatic_from(
        &self,
        start: &[Vec3],
        pressures: &[f64],
    ) -> Result<QuasistaticSolution> {
        if self.mesh.fixed_nodes.is_empty() {
            return Err(Error::InvalidArgument(
                "quasistatic solve needs at least one fixed node".into(),
            ));
        }
        let scaled = |s: f64| -> Vec<f64> { pressures.iter().map(|p| p * s).collect() };
        let mut x = start.to_vec();
        let mut done = 0.0f64;
        let mut increment = 1.0;
        let mut iterations = 0;
        let mut load_steps = 0;
        let mut indefinite = false;
        let rel = self.config.rel_tol;
        while done < 1.0 {
            let s = (done + increment).min(1.0);
            let p = scaled(s);
            let tol = (rel * self.load_scale(&x, &p)?.max(1e-12)).max(self.force_floor());
            match self.equilibrium_newton(&x, &p, tol, &mut indefinite) {
                Ok((xn, it)) => {
                    x = xn;
                    iterations += it;
                    load_steps += 1;
                    done = s;
                }
                Err(e @ (Error::InvertedElement { .. } | Error::NonConvergence { .. })) => {
                    if increment <= MIN_LOAD_INCREMENT {
                        return Err(e);
                    }
                    increment *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        let r = self.static_residual(&x, pressures)?;
        let tolerance = (rel * self.load_scale(&x, pressures)?.max(1e-12)).max(self.force_floor());
        Ok(QuasistaticSolution {
            markers: self.mesh.marker_positions(&x),
            x,
            iterations,
            residual: inf_norm(&r),
            tolerance,
            load_steps,
            indefinite,
        })
    }
}

pub fn quasistatic_solve(
    mesh: &TetMesh,
    materials: &MaterialSet,
    pressures: &[f64],
    config: &SolverConfig,
) -> Result<QuasistaticSolution> {
    Simulator::new(mesh, materials, config)?.quasistatic(pressures)
}
