//! Adjoint gradients against central finite differences.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::diff::{grad_dynamic, grad_quasistatic, loss_dynamic, loss_quasistatic, MarkerDataset, ParamVector};
use crate::elasticity::MaterialSet;
use crate::error::{Error, Result};
use crate::integrator::{PressureSchedule, SolverConfig};
use crate::mesh::TetMesh;

/// The experiment whose loss is differentiated.
#[derive(Debug, Clone, Copy)]
pub enum GradcheckProblem<'a> {
    Quasistatic(&'a MarkerDataset),
    Dynamic {
        dataset: &'a MarkerDataset,
        schedule: &'a PressureSchedule,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub param: &'static str,
    pub adjoint: f64,
    /// One per finite-difference step.
    pub fd: Vec<f64>,
    pub rel_err: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub loss: f64,
    /// Natural units.
    pub at: Vec<f64>,
    pub steps: Vec<f64>,
    pub rows: Vec<GradcheckRow>,
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

impl GradcheckReport {
    /// Worst parameter error at each step.
    pub fn error_by_step(&self) -> Vec<f64> {
        (0..self.steps.len())
            .map(|k| self.rows.iter().map(|r| r.rel_err[k]).fold(0.0, f64::max))
            .collect()
    }

    /// Worst parameter error at the best step.
    pub fn max_rel_error(&self) -> f64 {
        self.error_by_step().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// `param,adjoint,fd_<h>,rel_err_<h>,...`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("param,adjoint");
        for h in &self.steps {
            let _ = write!(out, ",fd_{h:e},rel_err_{h:e}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.param, r.adjoint);
            for (fd, e) in r.fd.iter().zip(&r.rel_err) {
                let _ = write!(out, ",{fd},{e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Compares the adjoint gradient at `params` with central differences in
/// optimizer space, one column per step.
pub fn gradcheck(
    mesh: &TetMesh,
    base: &MaterialSet,
    params: &ParamVector,
    problem: GradcheckProblem<'_>,
    steps: &[f64],
    solver: &SolverConfig,
) -> Result<GradcheckReport> {
    if steps.is_empty() || steps.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidArgument("finite-difference steps must be positive".into()));
    }
    let g = match problem {
        GradcheckProblem::Quasistatic(d) => grad_quasistatic(mesh, base, params, d, solver)?,
        GradcheckProblem::Dynamic { dataset, schedule } => grad_dynamic(mesh, base, params, dataset, schedule, solver)?,
    };
    let loss = |z: &[f64]| -> Result<f64> {
        let p = ParamVector::from_transformed(params.params(), z)?;
        match problem {
            GradcheckProblem::Quasistatic(d) => loss_quasistatic(mesh, base, &p, d, solver),
            GradcheckProblem::Dynamic { dataset, schedule } => loss_dynamic(mesh, base, &p, dataset, schedule, solver),
        }
    };
    let z0 = params.transformed();
    let probes: Vec<(usize, usize, f64)> = (0..z0.len())
        .flat_map(|i| steps.iter().enumerate().flat_map(move |(k, h)| [(i, k, *h), (i, k, -*h)]))
        .collect();
    let values: Vec<f64> = probes
        .par_iter()
        .map(|&(i, _, h)| {
            let mut z = z0.clone();
            z[i] += h;
            loss(&z)
        })
        .collect::<Result<_>>()?;
    let rows = params
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let fd: Vec<f64> = (0..steps.len())
                .map(|k| {
                    let base = 2 * (i * steps.len() + k);
                    (values[base] - values[base + 1]) / (2.0 * steps[k])
                })
                .collect();
            GradcheckRow {
                param: p.name(),
                adjoint: g.gradient[i],
                rel_err: fd.iter().map(|f| relative_error(g.gradient[i], *f)).collect(),
                fd,
            }
        })
        .collect();
    Ok(GradcheckReport {
        loss: g.loss,
        at: params.values().to_vec(),
        steps: steps.to_vec(),
        rows,
    })
}
