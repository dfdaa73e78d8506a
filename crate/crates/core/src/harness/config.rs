//! Experiment configuration: one TOML document per experiment. Unknown
//! keys are errors. Pressures may be bare numbers (Pa) or strings with a
//! `Pa`, `kPa`, `mbar` or `bar` suffix.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::elasticity::{Material, MaterialSet};
use crate::error::{Error, Result};
use crate::hydrodynamics::{EbtParams, LoadCellParams, SplitSpec, TrainConfig};
use crate::identification::IdentifyConfig;
use crate::integrator::{PressureSchedule, SolverConfig};
use crate::mesh::{generate_composite_beam, load_mesh, BeamSpec, Side, TetMesh, Vec3};
use crate::presets::{fish_tail, marker_points, Preset, BAR, FISH_MAX_DX};

/// A pressure in pascals.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Pressure(pub f64);

impl Pressure {
    pub fn pascals(self) -> f64 {
        self.0
    }
}

impl FromStr for Pressure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let split = t
            .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
            .unwrap_or(t.len());
        let (num, unit) = t.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("`{s}` is not a pressure")))?;
        let scale = match unit.trim().to_ascii_lowercase().as_str() {
            "" | "pa" => 1.0,
            "kpa" => 1e3,
            "mbar" => 1e-3 * BAR,
            "bar" => BAR,
            u => return Err(Error::Config(format!("unknown pressure unit `{u}` in `{s}` (use Pa, kPa, mbar or bar)"))),
        };
        let p = value * scale;
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Config(format!("pressure `{s}` must be finite and nonnegative")));
        }
        Ok(Pressure(p))
    }
}

impl fmt::Display for Pressure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Pa", self.0)
    }
}

impl Serialize for Pressure {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Pressure {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let p = match Raw::deserialize(d)? {
            Raw::Int(v) => Pressure(v as f64),
            Raw::Float(v) => Pressure(v),
            Raw::Text(s) => return s.parse().map_err(serde::de::Error::custom),
        };
        if !p.0.is_finite() || p.0 < 0.0 {
            return Err(serde::de::Error::custom(format!("pressure {} must be finite and nonnegative", p.0)));
        }
        Ok(p)
    }
}

/// Where the mesh comes from: a file, an explicit beam, or a preset tail
/// (the material preset's, Nemo by default). At most one of `path`,
/// `beam` and `preset` may be given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Longest cell along a preset tail (m).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_dx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beam: Option<BeamSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Marker points (m) for generated meshes; three along the top of the
    /// spine line by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub markers: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// Replaces the preset's body material.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<Material>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spine: Option<Material>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuationKind {
    #[default]
    SquareWave,
    /// Constant pressure on one side from `t = 0`.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChamberSide {
    #[default]
    Left,
    Right,
    Both,
}

impl ChamberSide {
    pub fn includes(self, side: Option<Side>) -> bool {
        matches!(
            (self, side),
            (ChamberSide::Both, Some(_)) | (ChamberSide::Left, Some(Side::Left)) | (ChamberSide::Right, Some(Side::Right))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuationConfig {
    pub kind: ActuationKind,
    /// The preset's maximum pressure when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Pressure>,
    /// Hz (square wave only).
    pub frequency: f64,
    /// Simulated time (s).
    pub duration: f64,
    /// Pressurized side (step only).
    pub side: ChamberSide,
}

impl Default for ActuationConfig {
    fn default() -> Self {
        ActuationConfig {
            kind: ActuationKind::SquareWave,
            amplitude: None,
            frequency: 1.0,
            duration: 2.0,
            side: ChamberSide::Left,
        }
    }
}

/// Noise and measurement chain of the synthetic rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Standard deviation of tracked marker coordinates (m).
    pub marker_noise: f64,
    /// Standard deviation of the load-cell reading (N).
    pub force_noise: f64,
    /// First-order lag of the valve between commanded and chamber
    /// pressure in thrust trials (s); 0 gives ideal square waves.
    pub valve_time_constant: f64,
    pub load_cell: LoadCellParams,
    pub ebt: EbtParams,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            marker_noise: 5e-4,
            force_noise: 2e-5,
            valve_time_constant: 0.1,
            load_cell: LoadCellParams::default(),
            ebt: EbtParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuasistaticConfig {
    /// Pressures of the static experiment; a third, two thirds and all of
    /// the actuation amplitude when empty.
    pub pressures: Vec<Pressure>,
    pub side: ChamberSide,
}

/// Standing-wave notch applied to ingested force channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotchConfig {
    /// Hz.
    pub frequency: f64,
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_q() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThrustConfig {
    pub amplitudes: Vec<Pressure>,
    /// Hz.
    pub frequencies: Vec<f64>,
    pub trials_per_cell: usize,
    /// Length of each trial (s); samples every solver step.
    pub duration: f64,
    pub split: SplitSpec,
    pub train: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notch: Option<NotchConfig>,
}

impl Default for ThrustConfig {
    fn default() -> Self {
        ThrustConfig {
            amplitudes: vec![Pressure(0.2 * BAR), Pressure(0.3 * BAR)],
            frequencies: vec![1.0, 2.0, 3.0, 4.0],
            trials_per_cell: 5,
            duration: 2.0,
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            notch: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradcheckKind {
    #[default]
    Quasistatic,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub kind: GradcheckKind,
    /// Rollout length of the dynamic check.
    pub steps: usize,
    /// Central-difference steps in optimizer space.
    pub fd_steps: Vec<f64>,
    /// Newton tolerance for the check; finite differences need equilibria
    /// far tighter than identification does.
    pub rel_tol: f64,
    /// Natural-unit point of the check; the identification start when
    /// absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at: Option<Vec<f64>>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            kind: GradcheckKind::Quasistatic,
            steps: 10,
            fd_steps: vec![1e-3, 1e-4, 1e-5],
            rel_tol: 1e-11,
            at: None,
        }
    }
}

/// Input files produced by earlier commands.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Marker dataset for `identify`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub markers: Option<PathBuf>,
    /// Directory of trial tables for `thrust`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<PathBuf>,
    /// Trained model for `thrust eval`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Drives every random stream of a command.
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub mesh: MeshConfig,
    pub material: MaterialConfig,
    pub actuation: ActuationConfig,
    pub solver: SolverConfig,
    pub plant: PlantConfig,
    pub quasistatic: QuasistaticConfig,
    pub thrust: ThrustConfig,
    pub identify: IdentifyConfig,
    pub gradcheck: GradcheckConfig,
    pub data: DataConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let m = &self.mesh;
        let sources = [m.preset.is_some(), m.beam.is_some(), m.path.is_some()];
        if sources.iter().filter(|s| **s).count() > 1 {
            return bad("mesh: give at most one of `preset`, `beam` and `path`".into());
        }
        if let Some(dx) = m.max_dx {
            if !(dx > 0.0) || m.beam.is_some() || m.path.is_some() {
                return bad("mesh: `max_dx` must be positive and only applies to preset tails".into());
            }
        }
        self.solver.check()?;
        let a = &self.actuation;
        if !(a.frequency > 0.0) || !(a.duration > 0.0) {
            return bad("actuation: frequency and duration must be positive".into());
        }
        let p = &self.plant;
        if !(p.marker_noise >= 0.0) || !(p.force_noise >= 0.0) || !(p.valve_time_constant >= 0.0) {
            return bad("plant: noise levels and valve time constant must be nonnegative".into());
        }
        p.load_cell.check()?;
        p.ebt.check()?;
        let t = &self.thrust;
        if t.trials_per_cell == 0 || !(t.duration > 0.0) || t.frequencies.iter().any(|f| !(*f > 0.0)) {
            return bad("thrust: trials_per_cell, duration and frequencies must be positive".into());
        }
        t.train.check()?;
        if let Some(n) = &t.notch {
            if !(n.frequency > 0.0) || !(n.q > 0.0) {
                return bad("thrust.notch: frequency and q must be positive".into());
            }
        }
        self.identify.adam.check()?;
        if self.gradcheck.fd_steps.is_empty() || self.gradcheck.fd_steps.iter().any(|h| !(*h > 0.0)) {
            return bad("gradcheck: fd_steps must be positive and non-empty".into());
        }
        if !(self.gradcheck.rel_tol > 0.0) {
            return bad("gradcheck: rel_tol must be positive".into());
        }
        if self.gradcheck.steps == 0 {
            return bad("gradcheck: steps must be at least 1".into());
        }
        Ok(())
    }

    fn preset(&self) -> Preset {
        self.mesh.preset.or(self.material.preset).unwrap_or(Preset::Nemo)
    }

    /// Beam to generate, or `None` when the mesh is read from a file.
    pub fn beam_spec(&self) -> Option<BeamSpec> {
        if self.mesh.path.is_some() {
            return None;
        }
        Some(match &self.mesh.beam {
            Some(b) => b.clone(),
            None => {
                let info = self.preset().info();
                fish_tail(info.chambers_per_side, self.mesh.max_dx.unwrap_or(FISH_MAX_DX))
            }
        })
    }

    /// Builds or loads the mesh. Relative paths resolve against `base`.
    pub fn build_mesh(&self, base: &Path) -> Result<TetMesh> {
        match (&self.mesh.path, self.beam_spec()) {
            (Some(p), _) => load_mesh(base.join(p)),
            (None, Some(spec)) => {
                let points: Vec<Vec3> = match &self.mesh.markers {
                    Some(m) => m.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(),
                    None => marker_points(&spec),
                };
                generate_composite_beam(&spec)?.with_markers(&points)
            }
            (None, None) => unreachable!("either a path or a beam"),
        }
    }

    pub fn materials(&self) -> Result<MaterialSet> {
        let mut set = self.material.preset.unwrap_or(self.preset()).materials();
        if let Some(b) = self.material.body {
            set.body = b;
        }
        if let Some(s) = self.material.spine {
            set.spine = s;
        }
        set.lame()?;
        Ok(set)
    }

    /// Actuation amplitude (Pa).
    pub fn amplitude(&self) -> f64 {
        self.actuation
            .amplitude
            .map_or(self.preset().info().max_pressure, Pressure::pascals)
    }

    pub fn schedule(&self, mesh: &TetMesh) -> Result<PressureSchedule> {
        let a = &self.actuation;
        match a.kind {
            ActuationKind::SquareWave => PressureSchedule::square_wave(mesh, self.amplitude(), a.frequency),
            ActuationKind::Step => Ok(PressureSchedule::constant(side_pressures(mesh, a.side, self.amplitude()))),
        }
    }

    /// Steps covering the actuation duration.
    pub fn num_steps(&self) -> usize {
        ((self.actuation.duration / self.solver.h).round() as usize).max(1)
    }

    /// Pressures of the static experiment (Pa).
    pub fn static_pressures(&self) -> Vec<f64> {
        if self.quasistatic.pressures.is_empty() {
            let p = self.amplitude();
            vec![p / 3.0, 2.0 * p / 3.0, p]
        } else {
            self.quasistatic.pressures.iter().map(|p| p.0).collect()
        }
    }
}

/// Per-chamber pressures with `p` on the chosen side.
pub fn side_pressures(mesh: &TetMesh, side: ChamberSide, p: f64) -> Vec<f64> {
    mesh.chambers
        .iter()
        .map(|c| if side.includes(mesh.chamber_side(c.id)) { p } else { 0.0 })
        .collect()
}
