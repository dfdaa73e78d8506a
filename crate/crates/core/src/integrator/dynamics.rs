use std::fmt::Write as _;

use super::{
    dot, inf_norm, two_norm, PressureSchedule, SimState, Simulator, SolverConfig, FORCE_ROUNDOFF,
};
use crate::elasticity::{flatten, unflatten, MaterialSet};
use crate::error::{Error, Result};
use crate::mesh::{TetMesh, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    /// Final `‖g‖∞`.
    pub residual: f64,
    pub tolerance: f64,
    pub history: Vec<f64>,
}

/// One implicit-Euler update actually taken, after any step splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Substep {
    pub h: f64,
    pub x0: Vec<Vec3>,
    pub v0: Vec<Vec3>,
    pub x1: Vec<Vec3>,
    pub pressures: Vec<f64>,
    pub report: StepReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: SimState,
    pub substeps: Vec<Substep>,
}

/// Line-search reference values at the current iterate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Merit {
    pub potential: Option<f64>,
    /// Directional derivative of the potential along the step.
    pub slope: f64,
    /// `‖r‖₂`.
    pub norm: f64,
}

impl Simulator<'_> {
    /// `M(x − x_i − h v_i) − h²(f_ela(x) + f_ext)` with clamped rows zeroed.
    pub fn residual(
        &self,
        x: &[Vec3],
        inertia_target: &[f64],
        h: f64,
        f_ext: &[f64],
    ) -> Result<Vec<f64>> {
        let fe = self.elastic_force(x)?;
        let xf = flatten(x);
        let h2 = h * h;
        let mut g: Vec<f64> = (0..xf.len())
            .map(|i| self.mass()[i] * (xf[i] - inertia_target[i]) - h2 * (fe[i] + f_ext[i]))
            .collect();
        self.zero_fixed(&mut g);
        Ok(g)
    }

    /// `½ (x − y)ᵀ M (x − y) + h² (E(x) − f_extᵀ x)` over free DOFs, the
    /// potential whose gradient is `residual`.
    pub fn incremental_potential(
        &self,
        x: &[Vec3],
        inertia_target: &[f64],
        h: f64,
        f_ext: &[f64],
    ) -> Result<f64> {
        let xf = flatten(x);
        let mut phi = h * h * self.model.energy(x, &self.lame)?;
        for i in (0..xf.len()).filter(|&i| !self.fixed_dofs()[i]) {
            let d = xf[i] - inertia_target[i];
            phi += 0.5 * self.mass()[i] * d * d - h * h * f_ext[i] * xf[i];
        }
        Ok(phi)
    }

    fn free_inf_norm(&self, v: &[f64]) -> f64 {
        let mut w = v.to_vec();
        self.zero_fixed(&mut w);
        inf_norm(&w)
    }

    /// Newton solve of a single implicit-Euler update with time step `h`.
    /// The chamber load is frozen at `x0`.
    pub fn atomic_step(
        &self,
        x0: &[Vec3],
        v0: &[Vec3],
        h: f64,
        pressures: &[f64],
    ) -> Result<(Vec<Vec3>, StepReport)> {
        let cfg = &self.config;
        let f_ext = self.external_force(x0, pressures)?;
        let mut vf = flatten(v0);
        self.zero_fixed(&mut vf);
        let x0f = flatten(x0);
        let target: Vec<f64> = x0f.iter().zip(&vf).map(|(x, v)| x + h * v).collect();

        let h2 = h * h;
        let mv: Vec<f64> = vf.iter().zip(self.mass()).map(|(v, m)| m * v).collect();
        let f_ela0 = self.elastic_force(x0)?;
        let scale = h2 * self.free_inf_norm(&f_ext)
            + h * self.free_inf_norm(&mv)
            + h2 * self.free_inf_norm(&f_ela0);
        // `M (x − y)` cancels digits of the positions themselves.
        let inertia_floor = FORCE_ROUNDOFF
            * x0f
                .iter()
                .zip(self.mass())
                .zip(self.fixed_dofs())
                .filter(|(_, f)| !**f)
                .fold(0.0f64, |a, ((x, m), _)| a.max(m * x.abs()));
        let tolerance =
            (cfg.rel_tol * scale.max(1e-12)).max(h2 * self.force_floor() + inertia_floor);

        let mut x = unflatten(&target);
        for (i, xi) in x.iter_mut().enumerate() {
            if self.fixed_dofs()[3 * i] {
                *xi = x0[i];
            }
        }
        if self.model.any_inverted(&x).is_some() {
            x = x0.to_vec();
        }
        let mut g = self.residual(&x, &target, h, &f_ext)?;
        let mut history = vec![inf_norm(&g)];
        for iter in 0..cfg.newton_max_iters {
            let res = inf_norm(&g);
            if res <= tolerance {
                return Ok((
                    x,
                    StepReport {
                        iterations: iter,
                        residual: res,
                        tolerance,
                        history,
                    },
                ));
            }
            let (factors, _) = self.factor_positive(self.newton_matrix(&x, h)?)?;
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let dx = factors.solve(&rhs);
            let merit = Merit {
                potential: Some(self.incremental_potential(&x, &target, h, &f_ext)?),
                slope: dot(&g, &dx),
                norm: two_norm(&g),
            };
            let (xn, gn) = self.line_search(&x, &dx, merit, |trial| {
                Ok((
                    Some(self.incremental_potential(trial, &target, h, &f_ext)?),
                    self.residual(trial, &target, h, &f_ext)?,
                ))
            })?;
            x = xn;
            g = gn;
            history.push(inf_norm(&g));
        }
        let res = inf_norm(&g);
        if res <= tolerance {
            let iterations = cfg.newton_max_iters;
            return Ok((
                x,
                StepReport {
                    iterations,
                    residual: res,
                    tolerance,
                    history,
                },
            ));
        }
        Err(Error::NonConvergence {
            iters: cfg.newton_max_iters,
            residual: res,
            tolerance,
            history,
        })
    }

    /// Backtracking from the full step. A trial is accepted on sufficient
    /// decrease of the potential (when there is one) or of `‖r‖₂`; inverted
    /// trials are skipped. Returns the accepted point and its residual.
    pub(crate) fn line_search(
        &self,
        x: &[Vec3],
        dx: &[f64],
        merit: Merit,
        mut eval: impl FnMut(&[Vec3]) -> Result<(Option<f64>, Vec<f64>)>,
    ) -> Result<(Vec<Vec3>, Vec<f64>)> {
        let cfg = &self.config;
        let mut alpha = 1.0;
        let mut last_inversion = None;
        let mut best: Option<(f64, Vec<Vec3>, Vec<f64>)> = None;
        for _ in 0..=cfg.line_search_max_halvings {
            let trial: Vec<Vec3> = x
                .iter()
                .enumerate()
                .map(|(i, p)| p + Vec3::new(dx[3 * i], dx[3 * i + 1], dx[3 * i + 2]) * alpha)
                .collect();
            if let Some(t) = self.model.any_inverted(&trial) {
                last_inversion = Some(t);
                alpha *= cfg.line_search_factor;
                continue;
            }
            let (phi, r) = eval(&trial)?;
            let m = two_norm(&r);
            let energy_ok = match (merit.potential, phi) {
                (Some(p0), Some(p1)) => merit.slope < 0.0 && p1 <= p0 + 1e-4 * alpha * merit.slope,
                _ => false,
            };
            if energy_ok || m < (1.0 - 1e-4 * alpha) * merit.norm {
                return Ok((trial, r));
            }
            if best.as_ref().is_none_or(|b| m < b.0) {
                best = Some((m, trial, r));
            }
            alpha *= cfg.line_search_factor;
        }
        match (best, last_inversion) {
            // No sufficient decrease; keep the best admissible point, which
            // lets roundoff-limited iterations finish on the tolerance test.
            (Some((m, trial, r)), _) if m <= merit.norm => Ok((trial, r)),
            (_, Some(tet)) => Err(Error::InvertedElement { tet, det: f64::NAN }),
            _ => Err(Error::NonConvergence {
                iters: cfg.line_search_max_halvings,
                residual: merit.norm,
                tolerance: 0.0,
                history: vec![merit.norm],
            }),
        }
    }

    fn advance(
        &self,
        x0: &[Vec3],
        v0: &[Vec3],
        h: f64,
        pressures: &[f64],
        retries: usize,
        out: &mut Vec<Substep>,
    ) -> Result<()> {
        match self.atomic_step(x0, v0, h, pressures) {
            Ok((x1, report)) => {
                out.push(Substep {
                    h,
                    x0: x0.to_vec(),
                    v0: v0.to_vec(),
                    x1,
                    pressures: pressures.to_vec(),
                    report,
                });
                Ok(())
            }
            Err(Error::InvertedElement { .. }) if retries > 0 => {
                let half = 0.5 * h;
                self.advance(x0, v0, half, pressures, retries - 1, out)?;
                let mid = out.last().expect("substep recorded");
                let (xm, vm) = (mid.x1.clone(), velocity(&mid.x0, &mid.x1, half));
                self.advance(&xm, &vm, half, pressures, retries - 1, out)
            }
            Err(e) => Err(e),
        }
    }

    /// One step of length `config.h`, split in halves on inversion.
    pub fn step(&self, state: &SimState, pressures: &[f64]) -> Result<StepOutcome> {
        let h = self.config.h;
        let mut substeps = Vec::new();
        self.advance(
            &state.x,
            &state.v,
            h,
            pressures,
            self.config.max_step_retries,
            &mut substeps,
        )?;
        let last = substeps.last().expect("at least one substep");
        let state = SimState {
            x: last.x1.clone(),
            v: velocity(&last.x0, &last.x1, last.h),
            t: state.t + h,
        };
        Ok(StepOutcome { state, substeps })
    }

    pub fn rollout(
        &self,
        state0: &SimState,
        schedule: &PressureSchedule,
        n_steps: usize,
    ) -> Result<Trajectory> {
        self.rollout_with(state0, schedule, n_steps, |_| {})
    }

    /// Rollout with a hook applied to each new state before it is recorded.
    pub fn rollout_with(
        &self,
        state0: &SimState,
        schedule: &PressureSchedule,
        n_steps: usize,
        mut hook: impl FnMut(&mut SimState),
    ) -> Result<Trajectory> {
        if n_steps == 0 {
            return Err(Error::InvalidArgument(
                "rollout needs at least one step".into(),
            ));
        }
        schedule.check()?;
        let h = self.config.h;
        let mut traj = Trajectory {
            times: vec![state0.t],
            markers: vec![self.mesh.marker_positions(&state0.x)],
            pressures: Vec::with_capacity(n_steps + 1),
            states: vec![state0.clone()],
            substeps: Vec::new(),
            step_ends: Vec::with_capacity(n_steps),
        };
        let mut state = state0.clone();
        for i in 0..n_steps {
            let t = state0.t + i as f64 * h;
            let p = schedule.pressures_at(t);
            let outcome = self.step(&state, &p).map_err(|e| e.at_step(i))?;
            state = outcome.state;
            state.t = state0.t + (i + 1) as f64 * h;
            hook(&mut state);
            traj.pressures.push(p);
            traj.substeps.extend(outcome.substeps);
            traj.step_ends.push(traj.substeps.len());
            traj.times.push(state.t);
            traj.markers.push(self.mesh.marker_positions(&state.x));
            traj.states.push(state.clone());
        }
        traj.pressures.push(schedule.pressures_at(state.t));
        Ok(traj)
    }
}

fn velocity(x0: &[Vec3], x1: &[Vec3], h: f64) -> Vec<Vec3> {
    x0.iter().zip(x1).map(|(a, b)| (b - a) / h).collect()
}

/// Recorded rollout. Entry `i` of `times`, `states`, `markers` and
/// `pressures` belongs to `t_i`; `pressures[i]` drove the step out of `t_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SimState>,
    pub markers: Vec<Vec<Vec3>>,
    pub pressures: Vec<Vec<f64>>,
    pub substeps: Vec<Substep>,
    /// `substeps[step_ends[i - 1]..step_ends[i]]` make up step `i`.
    pub step_ends: Vec<usize>,
}

impl Trajectory {
    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Comma-separated table with a header row:
    /// `t, marker_k_{x,y,z}..., chamber_j_pressure...`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let nm = self.markers.first().map_or(0, |m| m.len());
        let nc = self.pressures.first().map_or(0, |p| p.len());
        let mut cols = vec!["t".to_string()];
        for k in 0..nm {
            for a in ["x", "y", "z"] {
                cols.push(format!("marker_{k}_{a}"));
            }
        }
        for j in 0..nc {
            cols.push(format!("chamber_{j}_pressure"));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
        for i in 0..self.times.len() {
            let _ = write!(out, "{}", self.times[i]);
            for m in &self.markers[i] {
                let _ = write!(out, ",{},{},{}", m.x, m.y, m.z);
            }
            for p in &self.pressures[i] {
                let _ = write!(out, ",{p}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn step(
    mesh: &TetMesh,
    materials: &MaterialSet,
    state: &SimState,
    pressures: &[f64],
    config: &SolverConfig,
) -> Result<SimState> {
    Ok(Simulator::new(mesh, materials, config)?
        .step(state, pressures)?
        .state)
}

pub fn rollout(
    mesh: &TetMesh,
    materials: &MaterialSet,
    state0: &SimState,
    schedule: &PressureSchedule,
    config: &SolverConfig,
    n_steps: usize,
) -> Result<Trajectory> {
    Simulator::new(mesh, materials, config)?.rollout(state0, schedule, n_steps)
}
