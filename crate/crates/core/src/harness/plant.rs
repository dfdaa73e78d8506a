//! Synthetic twin of the test rig: known materials, a tracking camera with
//! Gaussian noise and a load cell behind the tail.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::{side_pressures, ChamberSide, PlantConfig};
use crate::diff::{planar, MarkerDataset, Observation};
use crate::elasticity::MaterialSet;
use crate::error::{Error, Result};
use crate::hydrodynamics::{ebt_thrust, load_cell_response, ThrustTrial, NUM_MARKERS};
use crate::integrator::{PressureSchedule, SimState, Simulator, SolverConfig, Trajectory};
use crate::mesh::{Side, TetMesh};

/// Independent stream `stream` of a master seed (splitmix64 finalizer).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random streams used by the plant.
const QUASISTATIC_STREAM: u64 = 1;
const THRUST_STREAM: u64 = 2;
const DYNAMIC_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPlant {
    /// Ground-truth materials.
    pub materials: MaterialSet,
    pub config: PlantConfig,
    pub seed: u64,
}

fn gaussian(sigma: f64) -> Result<Option<Normal<f64>>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level must be nonnegative, got {sigma}")));
    }
    Ok((sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("positive sigma")))
}

impl SyntheticPlant {
    pub fn new(materials: MaterialSet, config: PlantConfig, seed: u64) -> Result<Self> {
        gaussian(config.marker_noise)?;
        gaussian(config.force_noise)?;
        if !(config.valve_time_constant >= 0.0) {
            return Err(Error::InvalidArgument("valve time constant must be nonnegative".into()));
        }
        config.load_cell.check()?;
        config.ebt.check()?;
        materials.lame()?;
        Ok(SyntheticPlant { materials, config, seed })
    }

    /// Static deflection under each pressure on `side`, with tracked marker
    /// noise.
    pub fn synth_quasistatic(
        &self,
        mesh: &TetMesh,
        pressures: &[f64],
        side: ChamberSide,
        solver: &SolverConfig,
    ) -> Result<MarkerDataset> {
        if mesh.markers.is_empty() {
            return Err(Error::InvalidArgument("mesh has no markers".into()));
        }
        let sim = Simulator::new(mesh, &self.materials, solver)?;
        let loads: Vec<Vec<f64>> = pressures.iter().map(|p| side_pressures(mesh, side, *p)).collect();
        let solved: Vec<_> = loads
            .par_iter()
            .zip(pressures)
            .map(|(load, p)| {
                sim.quasistatic(load)
                    .map(|s| mesh.marker_positions(&s.x))
                    .map_err(|e| Error::InvalidArgument(format!("quasistatic solve at {p} Pa: {e}")))
            })
            .collect();
        let noise = gaussian(self.config.marker_noise)?;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, QUASISTATIC_STREAM));
        let mut observations = Vec::with_capacity(pressures.len());
        for (load, markers) in loads.into_iter().zip(solved) {
            let markers = markers?
                .iter()
                .map(|m| {
                    let mut p = planar(m);
                    if let Some(n) = &noise {
                        p[0] += n.sample(&mut rng);
                        p[1] += n.sample(&mut rng);
                    }
                    Some(p)
                })
                .collect();
            observations.push(Observation {
                pressures: load,
                markers,
                step: None,
            });
        }
        let data = MarkerDataset {
            body_length: mesh.body_length,
            observations,
        };
        data.check()?;
        Ok(data)
    }

    /// Markers after each of `steps` rollout steps under `schedule`, with
    /// tracked marker noise.
    pub fn synth_dynamic(
        &self,
        mesh: &TetMesh,
        schedule: &PressureSchedule,
        steps: usize,
        solver: &SolverConfig,
    ) -> Result<MarkerDataset> {
        if mesh.markers.is_empty() {
            return Err(Error::InvalidArgument("mesh has no markers".into()));
        }
        let sim = Simulator::new(mesh, &self.materials, solver)?;
        let traj = sim.rollout(&SimState::rest(mesh), schedule, steps)?;
        let noise = gaussian(self.config.marker_noise)?;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, DYNAMIC_STREAM));
        let observations = (1..=steps)
            .map(|s| Observation {
                pressures: traj.pressures[s].clone(),
                markers: traj.markers[s]
                    .iter()
                    .map(|m| {
                        let mut p = planar(m);
                        if let Some(n) = &noise {
                            p[0] += n.sample(&mut rng);
                            p[1] += n.sample(&mut rng);
                        }
                        Some(p)
                    })
                    .collect(),
                step: Some(s),
            })
            .collect();
        let data = MarkerDataset {
            body_length: mesh.body_length,
            observations,
        };
        data.check()?;
        Ok(data)
    }

    /// Thrust trials over the amplitude × frequency matrix, `per_cell`
    /// trials per cell. Each cell is simulated once; its trials differ in
    /// the tracking and force noise only.
    pub fn synth_thrust(
        &self,
        mesh: &TetMesh,
        amplitudes: &[f64],
        frequencies: &[f64],
        per_cell: usize,
        duration: f64,
        solver: &SolverConfig,
    ) -> Result<Vec<ThrustTrial>> {
        if mesh.markers.len() != NUM_MARKERS {
            return Err(Error::InvalidArgument(format!(
                "thrust trials need {NUM_MARKERS} markers, the mesh has {}",
                mesh.markers.len()
            )));
        }
        if per_cell == 0 || !(duration > 0.0) {
            return Err(Error::InvalidArgument("need at least one trial per cell and a positive duration".into()));
        }
        let steps = ((duration / solver.h).round() as usize).max(2);
        let sim = Simulator::new(mesh, &self.materials, solver)?;
        let cells: Vec<(f64, f64)> = amplitudes
            .iter()
            .flat_map(|a| frequencies.iter().map(move |f| (*a, *f)))
            .collect();
        let rollouts: Vec<Result<Trajectory>> = cells
            .par_iter()
            .map(|&(a, f)| {
                let schedule = PressureSchedule::lagged_square_wave(mesh, a, f, self.config.valve_time_constant)?;
                sim.rollout(&SimState::rest(mesh), &schedule, steps)
                    .map_err(|e| Error::InvalidArgument(format!("rollout at {a} Pa, {f} Hz: {e}")))
            })
            .collect();
        let marker_noise = gaussian(self.config.marker_noise)?;
        let force_noise = gaussian(self.config.force_noise)?;
        let m = self.config.ebt.virtual_mass();
        let h = solver.h;
        let left = mesh.chambers.iter().position(|c| mesh.chamber_side(c.id) == Some(Side::Left));
        let right = mesh.chambers.iter().position(|c| mesh.chamber_side(c.id) == Some(Side::Right));
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, THRUST_STREAM));
        let mut trials = Vec::with_capacity(cells.len() * per_cell);
        for (&(a, f), traj) in cells.iter().zip(rollouts) {
            let traj = traj?;
            let clean: Vec<[[f64; 2]; NUM_MARKERS]> = traj
                .markers
                .iter()
                .map(|ms| std::array::from_fn(|k| planar(&ms[k])))
                .collect();
            let thrust: Vec<f64> = (0..clean.len())
                .map(|i| {
                    let v = if i == 0 { 0.0 } else { (clean[i][NUM_MARKERS - 1][1] - clean[i - 1][NUM_MARKERS - 1][1]) / h };
                    ebt_thrust(v, m)
                })
                .collect();
            let measured = load_cell_response(&thrust, &self.config.load_cell, h)?;
            let channel = |k: Option<usize>| -> Vec<f64> {
                traj.pressures.iter().map(|p| k.map_or(0.0, |k| p[k])).collect()
            };
            let (p_left, p_right) = (channel(left), channel(right));
            for r in 0..per_cell {
                let mut markers = clean.clone();
                if let Some(n) = &marker_noise {
                    for row in &mut markers {
                        for p in row.iter_mut() {
                            p[0] += n.sample(&mut rng);
                            p[1] += n.sample(&mut rng);
                        }
                    }
                }
                let force = measured
                    .iter()
                    .map(|y| y + force_noise.as_ref().map_or(0.0, |n| n.sample(&mut rng)))
                    .collect();
                let trial = ThrustTrial {
                    id: trial_id(a, f, r),
                    amplitude: a,
                    frequency: f,
                    sample_period: h,
                    t: traj.times.clone(),
                    markers,
                    p_left: p_left.clone(),
                    p_right: p_right.clone(),
                    force,
                };
                trial.check()?;
                trials.push(trial);
            }
        }
        Ok(trials)
    }
}

/// `a<amplitude in Pa>_f<frequency in Hz>_t<index>`.
pub fn trial_id(amplitude: f64, frequency: f64, index: usize) -> String {
    format!("a{}_f{}_t{index}", amplitude.round(), frequency)
}
