use rayon::prelude::*;

use super::dataset::{loss_and_weights, planar, MarkerDataset, Planar};
use super::params::ParamVector;
use crate::elasticity::{lame_derivatives, MaterialSet};
use crate::error::{Error, Result};
use crate::integrator::{
    actuation_jacobian_mul, actuation_jacobian_transpose_mul, inf_norm, PressureSchedule, SimState,
    Simulator, SolverConfig, Substep,
};
use crate::linalg::Ldlt;
use crate::mesh::{TetMesh, Vec3};

/// Refinement of the transposed static solve stops once the residual is
/// this small relative to the right-hand side.
const REFINE_TOL: f64 = 1e-12;
const MAX_REFINE: usize = 30;

/// Loss and its gradient, in optimizer space and in natural units.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub natural_gradient: Vec<f64>,
}

/// `∂loss/∂(μ_r, λ_r)` as `[region][0 = μ, 1 = λ]`.
type LameGradient = [[f64; 2]; 2];

fn add_lame(acc: &mut LameGradient, c: &LameGradient, scale: f64) {
    for r in 0..2 {
        for k in 0..2 {
            acc[r][k] += scale * c[r][k];
        }
    }
}

fn natural_gradient(params: &ParamVector, materials: &MaterialSet, g: &LameGradient) -> Vec<f64> {
    params
        .params()
        .iter()
        .map(|p| {
            let m = materials.get(p.region());
            let d = lame_derivatives(m.youngs_modulus, m.poisson_ratio);
            let col = usize::from(p.is_poisson());
            let r = p.region().index();
            g[r][0] * d[0][col] + g[r][1] * d[1][col]
        })
        .collect()
}

fn finish(params: &ParamVector, materials: &MaterialSet, loss: f64, g: &LameGradient) -> LossGradient {
    let natural_gradient = natural_gradient(params, materials, g);
    LossGradient {
        loss,
        gradient: params.chain(&natural_gradient),
        natural_gradient,
    }
}

/// Spreads per-marker planar loss gradients onto node coordinates.
fn marker_adjoint(mesh: &TetMesh, weights: &[Planar], out: &mut [f64]) {
    for (m, w) in mesh.markers.iter().zip(weights) {
        let t = mesh.tets[m.tet];
        for a in 0..4 {
            out[3 * t[a]] += m.weights[a] * w[0];
            out[3 * t[a] + 1] += m.weights[a] * w[1];
        }
    }
}

fn check_markers(mesh: &TetMesh, dataset: &MarkerDataset) -> Result<()> {
    dataset.check()?;
    if dataset.num_markers() != mesh.markers.len() && !dataset.observations.is_empty() {
        return Err(Error::Shape(format!(
            "dataset has {} markers, mesh has {}",
            dataset.num_markers(),
            mesh.markers.len()
        )));
    }
    Ok(())
}

fn adjoint_factor(a: crate::linalg::SkylineMatrix) -> Result<Ldlt> {
    let f = a
        .factor()
        .map_err(|e| Error::Singular(format!("adjoint system is singular: {e}")))?;
    let ratio = f.pivot_ratio();
    if !(ratio > 1e-15) {
        return Err(Error::Singular(format!(
            "adjoint system is numerically singular (pivot ratio {ratio:e})"
        )));
    }
    Ok(f)
}

fn solve_quasistatic(
    sim: &Simulator<'_>,
    dataset: &MarkerDataset,
) -> Result<Vec<crate::integrator::QuasistaticSolution>> {
    if dataset.is_dynamic() {
        return Err(Error::InvalidArgument(
            "quasistatic loss needs a dataset without step indices".into(),
        ));
    }
    dataset
        .observations
        .par_iter()
        .enumerate()
        .map(|(i, o)| sim.quasistatic(&o.pressures).map_err(|e| e.at_observation(i)))
        .collect()
}

fn observed(dataset: &MarkerDataset) -> Vec<Vec<Option<Planar>>> {
    dataset.observations.iter().map(|o| o.markers.clone()).collect()
}

fn planar_markers(m: &[Vec3]) -> Vec<Planar> {
    m.iter().map(planar).collect()
}

/// Marker loss of quasistatic equilibria, one per observation.
pub fn loss_quasistatic(
    mesh: &TetMesh,
    base: &MaterialSet,
    params: &ParamVector,
    dataset: &MarkerDataset,
    config: &SolverConfig,
) -> Result<f64> {
    check_markers(mesh, dataset)?;
    let materials = params.apply(base)?;
    let sim = Simulator::new(mesh, &materials, config)?;
    let sols = solve_quasistatic(&sim, dataset)?;
    let simulated: Vec<Vec<Planar>> = sols.iter().map(|s| planar_markers(&s.markers)).collect();
    Ok(loss_and_weights(&simulated, &observed(dataset), dataset.body_length)?.0)
}

/// Solves `Tᵀ λ = b` for the exact static tangent `T = K − ∂f_act/∂x`.
/// The factored tangent holds only the symmetric part of the load
/// stiffness; the skew remainder, nonzero for open chambers, is removed by
/// iterative refinement.
fn static_adjoint(sim: &Simulator<'_>, x: &[Vec3], pressures: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let s = sim.static_tangent(x, pressures)?;
    let factors = adjoint_factor(s.clone())?;
    let mut lambda = factors.solve(b);
    let target = REFINE_TOL * inf_norm(b);
    let mut last = f64::INFINITY;
    for _ in 0..MAX_REFINE {
        let sl = s.mul_vec(&lambda);
        let jl = actuation_jacobian_mul(sim.mesh, x, pressures, &lambda)?;
        let jtl = actuation_jacobian_transpose_mul(sim.mesh, x, pressures, &lambda)?;
        let mut res: Vec<f64> = (0..b.len())
            .map(|i| b[i] - sl[i] - 0.5 * (jl[i] - jtl[i]))
            .collect();
        sim.zero_fixed(&mut res);
        let r = inf_norm(&res);
        if r <= target || r >= 0.5 * last {
            if r > 1e-6 * inf_norm(b) {
                return Err(Error::Singular(format!(
                    "transposed tangent solve stalled at relative residual {:e} (pivot ratio {:e})",
                    r / inf_norm(b),
                    factors.pivot_ratio()
                )));
            }
            break;
        }
        last = r;
        for (l, d) in lambda.iter_mut().zip(factors.solve(&res)) {
            *l += d;
        }
    }
    Ok(lambda)
}

/// Loss over quasistatic observations and its adjoint gradient: each
/// equilibrium gets one transposed tangent solve, and the parameter
/// sensitivity follows from the linear dependence of the elastic forces
/// on the Lamé parameters.
pub fn grad_quasistatic(
    mesh: &TetMesh,
    base: &MaterialSet,
    params: &ParamVector,
    dataset: &MarkerDataset,
    config: &SolverConfig,
) -> Result<LossGradient> {
    check_markers(mesh, dataset)?;
    let materials = params.apply(base)?;
    let sim = Simulator::new(mesh, &materials, config)?;
    let sols = solve_quasistatic(&sim, dataset)?;
    let simulated: Vec<Vec<Planar>> = sols.iter().map(|s| planar_markers(&s.markers)).collect();
    let (loss, weights) = loss_and_weights(&simulated, &observed(dataset), dataset.body_length)?;
    let parts: Vec<LameGradient> = sols
        .par_iter()
        .zip(&dataset.observations)
        .zip(&weights)
        .enumerate()
        .map(|(i, ((sol, obs), w))| -> Result<LameGradient> {
            let mut b = vec![0.0; 3 * mesh.nodes.len()];
            marker_adjoint(mesh, w, &mut b);
            sim.zero_fixed(&mut b);
            if b.iter().all(|v| *v == 0.0) {
                return Ok([[0.0; 2]; 2]);
            }
            let lambda = static_adjoint(&sim, &sol.x, &obs.pressures, &b).map_err(|e| e.at_observation(i))?;
            Ok(sim.model.parameter_forces(&sol.x)?.contract(&lambda))
        })
        .collect::<Result<_>>()?;
    let mut g = [[0.0; 2]; 2];
    for p in &parts {
        add_lame(&mut g, p, 1.0);
    }
    Ok(finish(params, &materials, loss, &g))
}

fn horizon(dataset: &MarkerDataset) -> Result<usize> {
    if !dataset.observations.is_empty() && !dataset.is_dynamic() {
        return Err(Error::InvalidArgument(
            "dynamic loss needs step indices on the observations".into(),
        ));
    }
    Ok(dataset.observations.iter().filter_map(|o| o.step).max().unwrap_or(0))
}

struct Forward {
    loss: f64,
    weights: Vec<Vec<Planar>>,
    trajectory: Option<crate::integrator::Trajectory>,
}

fn forward_dynamic(
    sim: &Simulator<'_>,
    dataset: &MarkerDataset,
    schedule: &PressureSchedule,
) -> Result<Forward> {
    let n = horizon(dataset)?;
    let rest = SimState::rest(sim.mesh);
    let trajectory = if n > 0 {
        Some(sim.rollout(&rest, schedule, n)?)
    } else {
        None
    };
    let markers_at = |step: usize| match &trajectory {
        Some(t) => planar_markers(&t.markers[step]),
        None => planar_markers(&sim.mesh.marker_positions(&rest.x)),
    };
    let simulated: Vec<Vec<Planar>> = dataset
        .observations
        .iter()
        .map(|o| markers_at(o.step.unwrap_or(0)))
        .collect();
    let (loss, weights) = loss_and_weights(&simulated, &observed(dataset), dataset.body_length)?;
    Ok(Forward {
        loss,
        weights,
        trajectory,
    })
}

/// Marker loss of a rollout from rest under `schedule`, observed at the
/// dataset's step indices.
pub fn loss_dynamic(
    mesh: &TetMesh,
    base: &MaterialSet,
    params: &ParamVector,
    dataset: &MarkerDataset,
    schedule: &PressureSchedule,
    config: &SolverConfig,
) -> Result<f64> {
    check_markers(mesh, dataset)?;
    let materials = params.apply(base)?;
    let sim = Simulator::new(mesh, &materials, config)?;
    Ok(forward_dynamic(&sim, dataset, schedule)?.loss)
}

/// Reverse step through one implicit-Euler update
/// `M(x₁ − x₀ − h v₀) = h²(f_ela(x₁) + f_ext(x₀))`, `v₁ = (x₁ − x₀)/h`.
/// Takes the adjoints of `(x₁, v₁)` and returns those of `(x₀, v₀)`.
fn substep_adjoint(
    sim: &Simulator<'_>,
    sub: &Substep,
    x_bar: &[f64],
    v_bar: &[f64],
    lame_bar: &mut LameGradient,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = sub.h;
    let mut b: Vec<f64> = x_bar.iter().zip(v_bar).map(|(x, v)| x + v / h).collect();
    sim.zero_fixed(&mut b);
    let factors = adjoint_factor(sim.newton_matrix(&sub.x1, h)?)?;
    let w = factors.solve(&b);
    let c = sim.model.parameter_forces(&sub.x1)?.contract(&w);
    add_lame(lame_bar, &c, h * h);
    let jt = actuation_jacobian_transpose_mul(sim.mesh, &sub.x0, &sub.pressures, &w)?;
    let m = sim.mass();
    let mut x0_bar: Vec<f64> = (0..w.len())
        .map(|i| m[i] * w[i] + h * h * jt[i] - v_bar[i] / h)
        .collect();
    let mut v0_bar: Vec<f64> = (0..w.len()).map(|i| h * m[i] * w[i]).collect();
    sim.zero_fixed(&mut x0_bar);
    sim.zero_fixed(&mut v0_bar);
    Ok((x0_bar, v0_bar))
}

/// Loss of a rollout from rest and its gradient by a reverse sweep over
/// every recorded substep.
pub fn grad_dynamic(
    mesh: &TetMesh,
    base: &MaterialSet,
    params: &ParamVector,
    dataset: &MarkerDataset,
    schedule: &PressureSchedule,
    config: &SolverConfig,
) -> Result<LossGradient> {
    check_markers(mesh, dataset)?;
    let materials = params.apply(base)?;
    let sim = Simulator::new(mesh, &materials, config)?;
    let fwd = forward_dynamic(&sim, dataset, schedule)?;
    let mut g = [[0.0; 2]; 2];
    let Some(traj) = fwd.trajectory else {
        return Ok(finish(params, &materials, fwd.loss, &g));
    };
    let n = traj.num_steps();
    let dofs = 3 * mesh.nodes.len();
    let mut seeds = vec![vec![0.0; dofs]; n + 1];
    for (o, w) in dataset.observations.iter().zip(&fwd.weights) {
        marker_adjoint(mesh, w, &mut seeds[o.step.unwrap_or(0)]);
    }
    let mut x_bar = std::mem::take(&mut seeds[n]);
    let mut v_bar = vec![0.0; dofs];
    for i in (0..n).rev() {
        let start = if i == 0 { 0 } else { traj.step_ends[i - 1] };
        for sub in traj.substeps[start..traj.step_ends[i]].iter().rev() {
            if x_bar.iter().chain(&v_bar).all(|v| *v == 0.0) {
                break;
            }
            (x_bar, v_bar) = substep_adjoint(&sim, sub, &x_bar, &v_bar, &mut g).map_err(|e| e.at_step(i))?;
        }
        for (a, s) in x_bar.iter_mut().zip(&seeds[i]) {
            *a += s;
        }
    }
    Ok(finish(params, &materials, fwd.loss, &g))
}
