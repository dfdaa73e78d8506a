use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of an optimizer history, in optimizer (transformed) space.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub iter: usize,
    /// Objective evaluations so far, this row's included.
    pub eval_count: usize,
    pub loss: f64,
    pub theta: Vec<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub best_theta: Vec<f64>,
    pub best_loss: f64,
    pub history: Vec<Iterate>,
    pub evaluations: usize,
    /// Iterations that moved the parameters (Adam only).
    pub updates: usize,
    /// Every evaluated point with its loss (grid search only).
    pub loss_field: Option<Vec<(Vec<f64>, f64)>>,
    /// Evaluations that failed and were scored `+∞`.
    pub failed: usize,
}

/// Axis-aligned box in optimizer space.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Shape(format!("{} lower bounds, {} upper", lo.len(), hi.len())));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] < hi[i])) {
            return Err(Error::InvalidArgument(format!(
                "bound {i}: lower {} is not below upper {}",
                lo[i], hi[i]
            )));
        }
        Ok(Bounds { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn project(&self, theta: &mut [f64]) {
        for ((t, lo), hi) in theta.iter_mut().zip(&self.lo).zip(&self.hi) {
            *t = t.clamp(*lo, *hi);
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.iter().zip(&self.lo).zip(&self.hi).all(|((t, lo), hi)| t >= lo && t <= hi)
    }
}

fn elapsed_ms(start: &Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn finite(loss: f64, grad: Option<&[f64]>, theta: &[f64], iter: usize) -> Result<()> {
    if !loss.is_finite() || grad.is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!(
            "objective at iteration {iter}, theta {theta:?}: loss {loss}, gradient {grad:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    /// Step size in optimizer space.
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// The step size is multiplied by this after every update; 1 keeps it
    /// constant.
    pub lr_decay: f64,
    pub max_iters: usize,
    /// Stop once an update lowers the loss by less than this (0 disables).
    pub stop_tol: f64,
    /// Stop once the loss is at or below this.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_target: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay: 1.0,
            max_iters: 50,
            stop_tol: 0.0,
            loss_target: None,
        }
    }
}

impl AdamConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("adam: {m}")));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(self.eps >= 0.0) || !(self.stop_tol >= 0.0) {
            return bad("eps and stop_tol must be nonnegative");
        }
        Ok(())
    }
}

/// Adam with bias correction. Iterate `k` of the history is the point
/// after `k` updates; the run evaluates `θ_0 … θ_max_iters`. With bounds,
/// each update is projected back into the box.
pub fn adam_minimize(
    mut objective: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    theta0: &[f64],
    cfg: &AdamConfig,
    bounds: Option<&Bounds>,
) -> Result<OptimResult> {
    cfg.check()?;
    let start = Instant::now();
    let n = theta0.len();
    let mut theta = theta0.to_vec();
    if let Some(b) = bounds {
        b.project(&mut theta);
    }
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut history = Vec::with_capacity(cfg.max_iters + 1);
    let mut best = (f64::INFINITY, theta.clone());
    let mut updates = 0;
    let mut previous = f64::INFINITY;
    for k in 0..=cfg.max_iters {
        let (loss, grad) = objective(&theta).map_err(|e| Error::Optimizer(format!("adam iteration {k}: {e}")))?;
        if grad.len() != n {
            return Err(Error::Shape(format!("gradient has {} entries for {n} parameters", grad.len())));
        }
        finite(loss, Some(&grad), &theta, k)?;
        history.push(Iterate {
            iter: k,
            eval_count: k + 1,
            loss,
            theta: theta.clone(),
            wall_ms: elapsed_ms(&start),
        });
        if loss < best.0 {
            best = (loss, theta.clone());
        }
        let stalled = k > 0 && previous - loss >= 0.0 && previous - loss < cfg.stop_tol;
        if k == cfg.max_iters || cfg.loss_target.is_some_and(|t| loss <= t) || stalled {
            break;
        }
        previous = loss;
        let t = (k + 1) as i32;
        let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
        let before = theta.clone();
        let lr = cfg.lr * cfg.lr_decay.powi(k as i32);
        for i in 0..n {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            theta[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
        }
        if let Some(b) = bounds {
            b.project(&mut theta);
        }
        if theta != before {
            updates += 1;
        }
    }
    Ok(OptimResult {
        best_theta: best.1,
        best_loss: best.0,
        evaluations: history.len(),
        history,
        updates,
        loss_field: None,
        failed: 0,
    })
}

/// Evaluates the full grid `n_per_dim^dim` over `bounds`, endpoints
/// included, in row-major order (last coordinate fastest). Ties go to the
/// earliest point; failed evaluations score `+∞`.
pub fn grid_search(
    objective: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    bounds: &Bounds,
    n_per_dim: usize,
) -> Result<OptimResult> {
    use rayon::prelude::*;
    if n_per_dim < 2 {
        return Err(Error::InvalidArgument(format!("grid needs at least 2 points per axis, got {n_per_dim}")));
    }
    let dim = bounds.dim();
    let total = n_per_dim
        .checked_pow(dim as u32)
        .ok_or_else(|| Error::InvalidArgument("grid too large".into()))?;
    let start = Instant::now();
    let point = |mut idx: usize| -> Vec<f64> {
        let mut p = vec![0.0; dim];
        for d in (0..dim).rev() {
            let k = idx % n_per_dim;
            idx /= n_per_dim;
            let s = k as f64 / (n_per_dim - 1) as f64;
            p[d] = if k == n_per_dim - 1 {
                bounds.hi[d]
            } else {
                bounds.lo[d] + s * (bounds.hi[d] - bounds.lo[d])
            };
        }
        p
    };
    let evaluated: Vec<(Vec<f64>, f64, f64, bool)> = (0..total)
        .into_par_iter()
        .map(|i| {
            let p = point(i);
            let (loss, ok) = match objective(&p) {
                Ok(l) if l.is_finite() => (l, true),
                _ => (f64::INFINITY, false),
            };
            (p, loss, elapsed_ms(&start), ok)
        })
        .collect();
    let mut best = (f64::INFINITY, point(0));
    let mut history = Vec::with_capacity(total);
    for (i, (p, loss, ms, _)) in evaluated.iter().enumerate() {
        if *loss < best.0 {
            best = (*loss, p.clone());
        }
        history.push(Iterate {
            iter: i,
            eval_count: i + 1,
            loss: *loss,
            theta: p.clone(),
            wall_ms: *ms,
        });
    }
    Ok(OptimResult {
        best_theta: best.1,
        best_loss: best.0,
        evaluations: total,
        failed: evaluated.iter().filter(|e| !e.3).count(),
        loss_field: Some(evaluated.into_iter().map(|(p, l, _, _)| (p, l)).collect()),
        history,
        updates: 0,
    })
}
