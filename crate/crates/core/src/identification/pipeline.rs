use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cmaes::{cmaes_minimize, CmaesConfig};
use super::optim::{adam_minimize, grid_search, AdamConfig, Bounds, OptimResult};
use crate::diff::{grad_dynamic, grad_quasistatic, loss_dynamic, loss_quasistatic, MarkerDataset, Param, ParamSet, ParamVector};
use crate::elasticity::MaterialSet;
use crate::error::{Error, Result};
use crate::integrator::{PressureSchedule, SolverConfig};
use crate::mesh::TetMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Adam,
    Cmaes,
    Grid,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(Method::Adam),
            "cmaes" | "cma-es" => Ok(Method::Cmaes),
            "grid" => Ok(Method::Grid),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}` (expected adam, cmaes or grid)"))),
        }
    }
}

/// Natural-unit search range for one parameter.
pub fn default_bounds(p: Param) -> (f64, f64) {
    match p {
        Param::EBody => (0.05e6, 0.5e6),
        Param::ESpine => (1.25e9, 10e9),
        Param::NuBody | Param::NuSpine => (0.01, 0.499),
    }
}

/// Natural-unit starting value for one parameter.
pub fn default_start(p: Param) -> f64 {
    match p {
        Param::EBody => 0.25e6,
        Param::ESpine => 2.5e9,
        Param::NuBody => 0.45,
        Param::NuSpine => 0.3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_per_dim: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n_per_dim: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyConfig {
    pub method: Method,
    pub params: ParamSet,
    /// Natural-unit start, one value per parameter; defaults per parameter
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    /// Natural-unit `[lo, hi]` per parameter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<[f64; 2]>>,
    pub adam: AdamConfig,
    pub cmaes: CmaesConfig,
    pub grid: GridConfig,
}

impl IdentifyConfig {
    pub fn start_params(&self) -> Result<ParamVector> {
        let params = self.params.params();
        let values = match &self.start {
            Some(v) => v.clone(),
            None => params.iter().map(|p| default_start(*p)).collect(),
        };
        ParamVector::new(params, &values)
    }

    /// Bounds in optimizer space.
    pub fn search_box(&self) -> Result<Bounds> {
        let params = self.params.params();
        let natural: Vec<(f64, f64)> = match &self.bounds {
            Some(b) if b.len() != params.len() => {
                return Err(Error::Shape(format!("{} bounds for {} parameters", b.len(), params.len())));
            }
            Some(b) => b.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
            None => params.iter().map(|p| default_bounds(*p)).collect(),
        };
        for (p, (lo, hi)) in params.iter().zip(&natural) {
            p.check(*lo)?;
            p.check(*hi)?;
        }
        Bounds::new(
            params.iter().zip(&natural).map(|(p, b)| p.transform(b.0)).collect(),
            params.iter().zip(&natural).map(|(p, b)| p.transform(b.1)).collect(),
        )
    }
}

/// What the simulated markers are compared against.
#[derive(Debug, Clone, Copy)]
pub enum Data<'a> {
    Quasistatic(&'a MarkerDataset),
    Dynamic {
        dataset: &'a MarkerDataset,
        schedule: &'a PressureSchedule,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub iter: usize,
    pub eval_count: usize,
    pub loss: f64,
    /// Natural units.
    pub params: Vec<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub method: Method,
    pub best: ParamVector,
    pub best_loss: f64,
    pub history: Vec<HistoryEntry>,
    pub evaluations: usize,
    pub updates: usize,
    /// Grid points (natural units) with their losses.
    pub loss_field: Option<Vec<(Vec<f64>, f64)>>,
    pub failed_evaluations: usize,
}

fn natural(params: &[Param], theta: &[f64]) -> Vec<f64> {
    params.iter().zip(theta).map(|(p, z)| p.untransform(*z)).collect()
}

impl IdentificationResult {
    fn from_optim(method: Method, params: &[Param], r: OptimResult) -> Result<Self> {
        Ok(IdentificationResult {
            method,
            best: ParamVector::from_transformed(params, &r.best_theta)?,
            best_loss: r.best_loss,
            history: r
                .history
                .iter()
                .map(|h| HistoryEntry {
                    iter: h.iter,
                    eval_count: h.eval_count,
                    loss: h.loss,
                    params: natural(params, &h.theta),
                    wall_ms: h.wall_ms,
                })
                .collect(),
            evaluations: r.evaluations,
            updates: r.updates,
            loss_field: r
                .loss_field
                .map(|f| f.into_iter().map(|(t, l)| (natural(params, &t), l)).collect()),
            failed_evaluations: r.failed,
        })
    }

    fn param_names(&self) -> Vec<&'static str> {
        self.best.params().iter().map(|p| p.name()).collect()
    }

    /// `iter,eval_count,loss,<params>` in natural units. Wall times go to a
    /// separate table so this one is reproducible byte for byte.
    pub fn history_table(&self) -> String {
        let mut out = format!("iter,eval_count,loss,{}\n", self.param_names().join(","));
        for h in &self.history {
            let _ = write!(out, "{},{},{}", h.iter, h.eval_count, h.loss);
            for v in &h.params {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// `iter,wall_ms`.
    pub fn timing_table(&self) -> String {
        let mut out = String::from("iter,wall_ms\n");
        for h in &self.history {
            let _ = writeln!(out, "{},{:.3}", h.iter, h.wall_ms);
        }
        out
    }

    /// `<params>,loss` rows of the grid, in evaluation order.
    pub fn loss_field_table(&self) -> Option<String> {
        let field = self.loss_field.as_ref()?;
        let mut out = format!("{},loss\n", self.param_names().join(","));
        for (p, l) in field {
            for v in p {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{l}");
        }
        Some(out)
    }

    /// Writes `history.csv`, `history_timing.csv` and, for grid search,
    /// `loss_field.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let put = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        put("history.csv", self.history_table())?;
        put("history_timing.csv", self.timing_table())?;
        if let Some(t) = self.loss_field_table() {
            put("loss_field.csv", t)?;
        }
        Ok(())
    }
}

/// Fits the configured parameters of `base` to marker data.
pub fn identify_materials(
    mesh: &TetMesh,
    base: &MaterialSet,
    data: Data<'_>,
    cfg: &IdentifyConfig,
    solver: &SolverConfig,
) -> Result<IdentificationResult> {
    let dataset = match data {
        Data::Quasistatic(d) | Data::Dynamic { dataset: d, .. } => d,
    };
    if dataset.observations.is_empty() {
        return Err(Error::InvalidArgument("dataset has no observations".into()));
    }
    let params = cfg.params.params();
    let start = cfg.start_params()?;
    let bounds = cfg.search_box()?;
    let theta0 = start.transformed();
    if !bounds.contains(&theta0) {
        return Err(Error::InvalidArgument(format!(
            "start {:?} lies outside the search bounds",
            start.values()
        )));
    }
    let loss = |theta: &[f64]| -> Result<f64> {
        let p = ParamVector::from_transformed(params, theta)?;
        match data {
            Data::Quasistatic(d) => loss_quasistatic(mesh, base, &p, d, solver),
            Data::Dynamic { dataset, schedule } => loss_dynamic(mesh, base, &p, dataset, schedule, solver),
        }
    };
    let result = match cfg.method {
        Method::Adam => adam_minimize(
            |theta| {
                let p = ParamVector::from_transformed(params, theta)?;
                let g = match data {
                    Data::Quasistatic(d) => grad_quasistatic(mesh, base, &p, d, solver)?,
                    Data::Dynamic { dataset, schedule } => grad_dynamic(mesh, base, &p, dataset, schedule, solver)?,
                };
                Ok((g.loss, g.gradient))
            },
            &theta0,
            &cfg.adam,
            Some(&bounds),
        )?,
        Method::Cmaes => cmaes_minimize(&loss, &theta0, &cfg.cmaes, Some(&bounds))?,
        Method::Grid => grid_search(&loss, &bounds, cfg.grid.n_per_dim)?,
    };
    IdentificationResult::from_optim(cfg.method, params, result)
}
