use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{Bounds, Iterate, OptimResult};
use crate::error::{Error, Result};

/// Covariance condition numbers beyond this count as degenerate.
const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaesConfig {
    pub sigma0: f64,
    /// `4 + ⌊3 ln n⌋` when absent.
    pub population: Option<usize>,
    pub max_generations: usize,
    pub seed: u64,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        CmaesConfig {
            sigma0: 0.3,
            population: None,
            max_generations: 50,
            seed: 0,
        }
    }
}

impl CmaesConfig {
    pub fn population_for(&self, n: usize) -> usize {
        self.population
            .unwrap_or(4 + (3.0 * (n.max(1) as f64).ln()).floor() as usize)
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if !(self.sigma0 > 0.0) || !self.sigma0.is_finite() {
            return Err(Error::InvalidArgument(format!("cma-es: sigma0 must be positive, got {}", self.sigma0)));
        }
        if self.population_for(n) < 2 {
            return Err(Error::InvalidArgument("cma-es: population must be at least 2".into()));
        }
        Ok(())
    }
}

/// Strategy constants for dimension `n` and population `lambda`.
struct Strategy {
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Strategy {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Strategy {
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

struct State {
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    /// Generations since the last (re)start.
    age: usize,
}

impl State {
    fn new(mean: DVector<f64>, sigma: f64) -> Self {
        let n = mean.len();
        State {
            mean,
            sigma,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            age: 0,
        }
    }
}

/// `B` and `D` of `C = B D² Bᵀ`, or `None` when `C` is degenerate.
fn decompose(cov: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    if !(lo > 0.0) || !hi.is_finite() || hi / lo > MAX_CONDITION {
        return None;
    }
    Some((eig.eigenvectors, eig.eigenvalues.map(f64::sqrt)))
}

/// `(μ/μ_w, λ)`-CMA-ES with cumulative step-size adaptation and rank-one
/// plus rank-μ covariance updates. Samples outside `bounds` are clipped
/// onto the box before evaluation and enter the update as clipped. A
/// degenerate covariance triggers one restart from the best point with
/// twice the initial step.
pub fn cmaes_minimize(
    objective: &(dyn Fn(&[f64]) -> Result<f64> + Sync),
    theta0: &[f64],
    cfg: &CmaesConfig,
    bounds: Option<&Bounds>,
) -> Result<OptimResult> {
    let n = theta0.len();
    cfg.check(n)?;
    if n == 0 {
        return Err(Error::InvalidArgument("cma-es needs at least one parameter".into()));
    }
    let lambda = cfg.population_for(n);
    let s = Strategy::new(n, lambda);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let start = Instant::now();
    let mut theta = theta0.to_vec();
    if let Some(b) = bounds {
        b.project(&mut theta);
    }
    let mut st = State::new(DVector::from_vec(theta), cfg.sigma0);
    let mut restarted = false;
    let mut best = (f64::INFINITY, theta0.to_vec());
    let mut history = Vec::with_capacity(cfg.max_generations);
    let mut evaluations = 0;
    let mut failed = 0;
    for generation in 0..cfg.max_generations {
        let (b, d) = match decompose(&st.cov).filter(|_| st.sigma.is_finite() && st.sigma > 0.0) {
            Some(bd) => bd,
            None if !restarted => {
                restarted = true;
                st = State::new(DVector::from_vec(best.1.clone()), 2.0 * cfg.sigma0);
                (DMatrix::identity(n, n), DVector::from_element(n, 1.0))
            }
            None => {
                return Err(Error::Optimizer(format!(
                    "cma-es covariance degenerate again at generation {generation} after a restart"
                )));
            }
        };
        let bd = &b * DMatrix::from_diagonal(&d);
        let samples: Vec<DVector<f64>> = (0..lambda)
            .map(|_| {
                let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let mut x = &st.mean + st.sigma * (&bd * z);
                if let Some(bx) = bounds {
                    bx.project(x.as_mut_slice());
                }
                x
            })
            .collect();
        let losses: Vec<Option<f64>> = samples
            .par_iter()
            .map(|x| objective(x.as_slice()).ok().filter(|l| l.is_finite()))
            .collect();
        evaluations += lambda;
        failed += losses.iter().filter(|l| l.is_none()).count();
        let scored: Vec<f64> = losses.iter().map(|l| l.unwrap_or(f64::INFINITY)).collect();
        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&i, &j| scored[i].total_cmp(&scored[j]));
        let top = order[0];
        if scored[top] < best.0 {
            best = (scored[top], samples[top].as_slice().to_vec());
        }
        history.push(Iterate {
            iter: generation,
            eval_count: evaluations,
            loss: scored[top],
            theta: samples[top].as_slice().to_vec(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        let old_mean = st.mean.clone();
        let mut mean = DVector::zeros(n);
        for (w, &i) in s.weights.iter().zip(&order[..s.mu]) {
            mean += *w * &samples[i];
        }
        let y_w = (&mean - &old_mean) / st.sigma;
        let inv_sqrt = &b * DMatrix::from_diagonal(&d.map(|v| 1.0 / v)) * b.transpose();
        st.p_sigma = (1.0 - s.c_sigma) * &st.p_sigma
            + (s.c_sigma * (2.0 - s.c_sigma) * s.mu_eff).sqrt() * (&inv_sqrt * &y_w);
        st.age += 1;
        let ps_norm = st.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - s.c_sigma).powi(2 * st.age as i32)).sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * s.chi_n;
        let hs = if h_sigma { 1.0 } else { 0.0 };
        st.p_c = (1.0 - s.c_c) * &st.p_c + hs * (s.c_c * (2.0 - s.c_c) * s.mu_eff).sqrt() * &y_w;
        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, &i) in s.weights.iter().zip(&order[..s.mu]) {
            let y = (&samples[i] - &old_mean) / st.sigma;
            rank_mu += *w * &y * y.transpose();
        }
        let decay = 1.0 - s.c_1 - s.c_mu + (1.0 - hs) * s.c_1 * s.c_c * (2.0 - s.c_c);
        st.cov = decay * &st.cov + s.c_1 * &st.p_c * st.p_c.transpose() + s.c_mu * rank_mu;
        st.sigma *= ((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1.0)).exp();
        st.mean = mean;
    }
    Ok(OptimResult {
        best_theta: best.1,
        best_loss: best.0,
        history,
        evaluations,
        updates: 0,
        loss_field: None,
        failed,
    })
}
