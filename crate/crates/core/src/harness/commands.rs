//! The experiment commands behind the command-line tool. Each writes its
//! primary outputs into the output directory and its wall-clock details
//! into a `<command>.log` sidecar, so reruns with the same config and seed
//! reproduce the primary files byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::{ExperimentConfig, GradcheckKind};
use super::gradcheck::{gradcheck, GradcheckProblem, GradcheckReport};
use super::ingest::load_trial_dir;
use super::plant::{sub_seed, SyntheticPlant};
use crate::diff::{MarkerDataset, ParamVector};
use crate::error::{Error, Result};
use crate::hydrodynamics::{
    build_thrust_dataset, evaluate_thrust_model, prediction_table, train_thrust_model, trial_predictions,
    SplitSpec, ThrustMetrics, ThrustModel, ThrustTrial,
};
use crate::identification::{identify_materials, Data, IdentificationResult};
use crate::integrator::{SimState, Simulator, SolverConfig};
use crate::mesh::{mesh_to_string, validate, TetMesh};

/// Random streams derived from the top-level seed.
const SPLIT_STREAM: u64 = 10;
const TRAIN_STREAM: u64 = 11;
const CMAES_STREAM: u64 = 12;

/// A config together with where its relative paths point.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Directory relative input paths resolve against.
    pub base: PathBuf,
    pub out: PathBuf,
}

/// What a command did: lines for the terminal and the files it wrote.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

impl Experiment {
    /// Reads a config file; relative paths inside it resolve against its
    /// directory, and outputs go to its `out` (default `out`).
    pub fn load(path: &Path) -> Result<Self> {
        let config = ExperimentConfig::load(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self::new(config, base))
    }

    pub fn new(config: ExperimentConfig, base: PathBuf) -> Self {
        let out = base.join(config.out.clone().unwrap_or_else(|| PathBuf::from("out")));
        Experiment { config, base, out }
    }

    fn input(&self, field: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
        path.as_ref()
            .map(|p| self.base.join(p))
            .ok_or_else(|| Error::Config(format!("`data.{field}` is required for this command")))
    }

    fn mesh(&self) -> Result<TetMesh> {
        self.config.build_mesh(&self.base)
    }

    fn plant(&self) -> Result<SyntheticPlant> {
        SyntheticPlant::new(self.config.materials()?, self.config.plant.clone(), self.config.seed)
    }

    fn put(&self, outcome: &mut Outcome, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        outcome.written.push(path);
        Ok(())
    }

    /// Runs `body`, then writes the resolved config and the sidecar log.
    fn run(&self, command: &str, body: impl FnOnce(&Self, &mut Outcome) -> Result<()>) -> Result<Outcome> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let clock = Instant::now();
        let mut outcome = Outcome::default();
        body(self, &mut outcome)?;
        self.put(&mut outcome, "config.toml", &self.config.to_toml())?;
        let log = format!(
            "command = {command}\nversion = {}\nstarted_unix = {started:.3}\nelapsed_s = {:.3}\n",
            env!("CARGO_PKG_VERSION"),
            clock.elapsed().as_secs_f64()
        );
        let path = self.out.join(format!("{command}.log"));
        std::fs::write(&path, log).map_err(|e| Error::io(&path, e))?;
        Ok(outcome)
    }

    /// Generates (or loads) the mesh, validates it and writes `mesh.txt`
    /// and `validation.txt`. Fails when validation fails.
    pub fn mesh_gen(&self, edge_check: bool) -> Result<Outcome> {
        self.run("mesh-gen", |ex, out| {
            if edge_check {
                match ex.config.beam_spec().and_then(|s| s.edge_check()) {
                    Some(w) => out.say(format!("warning: {w}")),
                    None => out.say("edge check: grid meets the 1/50 body-length guideline"),
                }
            }
            let mesh = ex.mesh()?;
            let report = validate(&mesh);
            ex.put(out, "mesh.txt", &mesh_to_string(&mesh))?;
            ex.put(out, "validation.txt", &format!("{report}\n"))?;
            out.say(report.to_string());
            if !report.passed() {
                return Err(Error::Mesh(report.failures.join("; ")));
            }
            Ok(())
        })
    }

    /// Validates the configured mesh without writing it.
    pub fn validate(&self) -> Result<Outcome> {
        self.run("validate", |ex, out| {
            let mesh = ex.mesh()?;
            let report = validate(&mesh);
            ex.put(out, "validation.txt", &format!("{report}\n"))?;
            out.say(report.to_string());
            if !report.passed() {
                return Err(Error::Mesh(report.failures.join("; ")));
            }
            Ok(())
        })
    }

    /// Static marker dataset of the plant: `markers.csv`.
    pub fn synth_quasistatic(&self) -> Result<Outcome> {
        self.run("synth-quasistatic", |ex, out| {
            let mesh = ex.mesh()?;
            let c = &ex.config;
            let data = ex
                .plant()?
                .synth_quasistatic(&mesh, &c.static_pressures(), c.quasistatic.side, &c.solver)?;
            ex.put(out, "markers.csv", &data.to_text())?;
            out.say(format!("{} observations of {} markers", data.observations.len(), data.num_markers()));
            Ok(())
        })
    }

    /// Thrust trials of the plant, one `trials/<id>.csv` each.
    pub fn synth_thrust(&self) -> Result<Outcome> {
        self.run("synth-thrust", |ex, out| {
            let mesh = ex.mesh()?;
            let t = &ex.config.thrust;
            let amplitudes: Vec<f64> = t.amplitudes.iter().map(|p| p.0).collect();
            let trials = ex.plant()?.synth_thrust(
                &mesh,
                &amplitudes,
                &t.frequencies,
                t.trials_per_cell,
                t.duration,
                &ex.config.solver,
            )?;
            for trial in &trials {
                ex.put(out, &format!("trials/{}.csv", trial.id), &trial.to_text())?;
            }
            out.say(format!("{} trials", trials.len()));
            Ok(())
        })
    }

    /// Rollout of the configured actuation: `trajectory.csv`.
    pub fn simulate(&self) -> Result<Outcome> {
        self.run("simulate", |ex, out| {
            let mesh = ex.mesh()?;
            let c = &ex.config;
            let sim = Simulator::new(&mesh, &c.materials()?, &c.solver)?;
            let traj = sim.rollout(&SimState::rest(&mesh), &c.schedule(&mesh)?, c.num_steps())?;
            ex.put(out, "trajectory.csv", &traj.to_table())?;
            out.say(format!("{} steps of {} s", traj.num_steps(), c.solver.h));
            Ok(())
        })
    }

    /// Static equilibria at the configured pressures: `quasistatic.csv`
    /// with `pressure, marker_k_{x,y,z}...`.
    pub fn quasistatic(&self) -> Result<Outcome> {
        self.run("quasistatic", |ex, out| {
            let mesh = ex.mesh()?;
            let c = &ex.config;
            let sim = Simulator::new(&mesh, &c.materials()?, &c.solver)?;
            let mut table = String::from("pressure");
            for k in 0..mesh.markers.len() {
                let _ = write!(table, ",marker_{k}_x,marker_{k}_y,marker_{k}_z");
            }
            table.push('\n');
            for p in c.static_pressures() {
                let sol = sim
                    .quasistatic(&super::config::side_pressures(&mesh, c.quasistatic.side, p))
                    .map_err(|e| Error::InvalidArgument(format!("quasistatic solve at {p} Pa: {e}")))?;
                let _ = write!(table, "{p}");
                for m in &sol.markers {
                    let _ = write!(table, ",{},{},{}", m.x, m.y, m.z);
                }
                table.push('\n');
            }
            ex.put(out, "quasistatic.csv", &table)?;
            Ok(())
        })
    }

    /// Fits materials to `data.markers`: `history.csv`, `result.toml`
    /// and, for grid search, `loss_field.csv`. Dynamic datasets are
    /// simulated under the configured actuation.
    pub fn identify(&self) -> Result<Outcome> {
        self.run("identify", |ex, out| {
            let mesh = ex.mesh()?;
            let c = &ex.config;
            let data = MarkerDataset::load(&ex.input("markers", &c.data.markers)?)?;
            let mut cfg = c.identify.clone();
            cfg.cmaes.seed = sub_seed(c.seed.wrapping_add(cfg.cmaes.seed), CMAES_STREAM);
            let schedule = c.schedule(&mesh)?;
            let source = if data.is_dynamic() {
                Data::Dynamic {
                    dataset: &data,
                    schedule: &schedule,
                }
            } else {
                Data::Quasistatic(&data)
            };
            let result = identify_materials(&mesh, &c.materials()?, source, &cfg, &c.solver)?;
            ex.put(out, "history.csv", &result.history_table())?;
            if let Some(field) = result.loss_field_table() {
                ex.put(out, "loss_field.csv", &field)?;
            }
            ex.put(out, "result.toml", &result_toml(&result))?;
            let timing = out.written.len();
            ex.put(out, "history_timing.csv", &result.timing_table())?;
            out.written.remove(timing);
            for (p, v) in result.best.params().iter().zip(result.best.values()) {
                out.say(format!("{p} = {v}"));
            }
            out.say(format!("loss = {} after {} evaluations", result.best_loss, result.evaluations));
            Ok(())
        })
    }

    /// Adjoint against finite differences on plant data, at `gradcheck.at`
    /// or the identification start: `gradcheck.csv`.
    pub fn gradcheck(&self) -> Result<Outcome> {
        self.run("gradcheck", |ex, out| {
            let report = ex.gradcheck_report()?;
            ex.put(out, "gradcheck.csv", &report.to_table())?;
            for (h, e) in report.steps.iter().zip(report.error_by_step()) {
                out.say(format!("step {h:e}: max relative error {e:.3e}"));
            }
            out.say(format!("max relative error {:.3e}", report.max_rel_error()));
            Ok(())
        })
    }

    pub fn gradcheck_report(&self) -> Result<GradcheckReport> {
        let mesh = self.mesh()?;
        let c = &self.config;
        let g = &c.gradcheck;
        let solver = SolverConfig {
            rel_tol: g.rel_tol.min(c.solver.rel_tol),
            ..c.solver.clone()
        };
        let plant = SyntheticPlant::new(c.materials()?, c.plant.clone(), c.seed)?;
        let params = match &g.at {
            Some(v) => ParamVector::new(c.identify.params.params(), v)?,
            None => c.identify.start_params()?,
        };
        match g.kind {
            GradcheckKind::Quasistatic => {
                let data = plant.synth_quasistatic(&mesh, &c.static_pressures(), c.quasistatic.side, &solver)?;
                gradcheck(&mesh, &plant.materials, &params, GradcheckProblem::Quasistatic(&data), &g.fd_steps, &solver)
            }
            GradcheckKind::Dynamic => {
                let schedule = c.schedule(&mesh)?;
                let data = plant.synth_dynamic(&mesh, &schedule, g.steps, &solver)?;
                let problem = GradcheckProblem::Dynamic {
                    dataset: &data,
                    schedule: &schedule,
                };
                gradcheck(&mesh, &plant.materials, &params, problem, &g.fd_steps, &solver)
            }
        }
    }

    fn trials(&self) -> Result<Vec<ThrustTrial>> {
        let dir = self.input("trials", &self.config.data.trials)?;
        load_trial_dir(&dir, self.config.thrust.notch.as_ref())
    }

    /// Splits `data.trials`, trains the thrust network and evaluates it:
    /// `model.json`, `metrics.json` and `predictions/<id>.csv`.
    pub fn thrust_train(&self) -> Result<Outcome> {
        self.run("thrust-train", |ex, out| {
            let c = &ex.config;
            let trials = ex.trials()?;
            let (train, val) = build_thrust_dataset(&trials, &c.thrust.split, sub_seed(c.seed, SPLIT_STREAM))?;
            let mut cfg = c.thrust.train.clone();
            cfg.seed = sub_seed(c.seed.wrapping_add(cfg.seed), TRAIN_STREAM);
            let samples = crate::hydrodynamics::ThrustSamples::from_trials(&train)?;
            let model = train_thrust_model(&samples, &cfg)?;
            ex.put(out, "model.json", &model.to_json())?;
            let report = ThrustReport {
                split: c.thrust.split.clone(),
                train: evaluate_thrust_model(&model, &train, &c.plant.ebt)?,
                validation: evaluate_thrust_model(&model, &val, &c.plant.ebt)?,
            };
            ex.write_predictions(out, &model, &trials)?;
            ex.put(out, "metrics.json", &to_json(&report))?;
            out.say(format!(
                "{} train / {} validation trials; train MSE {:.4e} N², validation R² {:.4}",
                train.len(),
                val.len(),
                report.train.mse,
                report.validation.r2
            ));
            Ok(())
        })
    }

    /// Evaluates `data.model` on every trial in `data.trials`.
    pub fn thrust_eval(&self) -> Result<Outcome> {
        self.run("thrust-eval", |ex, out| {
            let c = &ex.config;
            let model = ThrustModel::load(ex.input("model", &c.data.model)?)?;
            let trials = ex.trials()?;
            let metrics = evaluate_thrust_model(&model, &trials, &c.plant.ebt)?;
            ex.write_predictions(out, &model, &trials)?;
            ex.put(out, "metrics.json", &to_json(&metrics))?;
            out.say(format!("{} trials; MSE {:.4e} N², R² {:.4}", trials.len(), metrics.mse, metrics.r2));
            Ok(())
        })
    }

    fn write_predictions(&self, out: &mut Outcome, model: &ThrustModel, trials: &[ThrustTrial]) -> Result<()> {
        for t in trials {
            let rows = trial_predictions(model, t, &self.config.plant.ebt)?;
            self.put(out, &format!("predictions/{}.csv", t.id), &prediction_table(&rows))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThrustReport {
    pub split: SplitSpec,
    pub train: ThrustMetrics,
    pub validation: ThrustMetrics,
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("metrics serialize");
    s.push('\n');
    s
}

fn result_toml(r: &IdentificationResult) -> String {
    let mut s = format!(
        "method = \"{}\"\nbest_loss = {:?}\nevaluations = {}\nupdates = {}\nfailed_evaluations = {}\n\n[best]\n",
        format!("{:?}", r.method).to_ascii_lowercase(),
        r.best_loss,
        r.evaluations,
        r.updates,
        r.failed_evaluations
    );
    for (p, v) in r.best.params().iter().zip(r.best.values()) {
        let _ = writeln!(s, "{} = {v:?}", p.name());
    }
    s
}
