use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ebt::{ebt_thrust, EbtParams};
use super::trial::{ThrustSamples, ThrustTrial};
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: [usize; 3] = [200, 300, 200];
/// Smallest standard deviation used to scale a feature.
pub const STD_FLOOR: f64 = 1e-8;
pub const MODEL_FORMAT: &str = "finsim-thrust-model";
pub const MODEL_VERSION: u32 = 1;
/// Columns per forward pass when predicting many samples.
const CHUNK: usize = 512;

/// Affine map `y = W x + b`; `W` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weights: DMatrix::zeros(outputs, inputs),
            bias: DVector::zeros(outputs),
        }
    }

    /// Glorot-uniform weights, zero biases.
    fn glorot(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Layer {
            weights: DMatrix::from_fn(outputs, inputs, |_, _| rng.random_range(-limit..limit)),
            bias: DVector::zeros(outputs),
        }
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        z
    }
}

/// Per-feature affine scaling fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Normalization {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Population mean and standard deviation per column, the latter
    /// floored at `STD_FLOOR`.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(d) = rows.first().map(Vec::len) else {
            return Err(Error::InvalidArgument("cannot fit normalization to no samples".into()));
        };
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        if mean.iter().chain(&std).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature statistics".into()));
        }
        Ok(Normalization { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 64,
            learning_rate: 1e-3,
            hidden: DEFAULT_HIDDEN.to_vec(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden layers must have at least one unit".into()));
        }
        Ok(())
    }
}

/// What training did, kept with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Mean squared error (N²) over the whole training set after each
    /// epoch.
    pub train_mse: Vec<f64>,
}

/// Fully connected ReLU network mapping one feature vector to a thrust
/// force. Inputs are standardized with the training statistics and the
/// raw output is mapped back to newtons with `target_mean + target_std·y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrustModel {
    pub layers: Vec<Layer>,
    pub input: Normalization,
    pub target_mean: f64,
    pub target_std: f64,
    pub log: Option<TrainingLog>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    dims: Vec<usize>,
    /// Row-major, one matrix per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
    target_mean: f64,
    target_std: f64,
    training: Option<TrainingLog>,
}

impl ThrustModel {
    /// All weights and biases zero, identity scaling.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(ThrustModel {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            input: Normalization::identity(dims[0]),
            target_mean: 0.0,
            target_std: 1.0,
            log: None,
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weights.nrows()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.ncols())
    }

    pub fn check(&self) -> Result<()> {
        let dims = self.dims();
        check_dims(&dims)?;
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.ncols() != dims[i] || l.bias.len() != dims[i + 1] {
                return Err(Error::Shape(format!("layer {i} does not chain with its neighbours")));
            }
        }
        if self.input.mean.len() != dims[0] || self.input.std.len() != dims[0] {
            return Err(Error::Shape("normalization does not match the input dimension".into()));
        }
        if self.input.std.iter().any(|s| !(*s >= STD_FLOOR)) || !(self.target_std > 0.0) {
            return Err(Error::InvalidArgument("scales must be positive".into()));
        }
        let params = self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()));
        if params.chain(&self.input.mean).chain([&self.target_mean]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Output in normalized target units for normalized inputs stored
    /// column-wise.
    fn forward(&self, x: DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut a = x;
        for (i, l) in self.layers.iter().enumerate() {
            a = l.apply(&a);
            if i < last {
                a.apply(|v| *v = v.max(0.0));
            }
        }
        a
    }

    fn normalized_columns(&self, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let d = self.input_dim();
        let mut x = DMatrix::zeros(d, rows.len());
        for (j, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::Shape(format!("feature vector has {} entries, model expects {d}", r.len())));
            }
            x.column_mut(j).copy_from_slice(&self.input.apply(r));
        }
        Ok(x)
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        Ok(self.predict_batch(std::slice::from_ref(&features.to_vec()))?[0])
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(rows.len());
        for chunk in rows.chunks(CHUNK) {
            let y = self.forward(self.normalized_columns(chunk)?);
            out.extend(y.iter().map(|v| self.target_mean + self.target_std * v));
        }
        Ok(out)
    }

    /// Mean squared error (N²) over `samples`.
    pub fn mse(&self, samples: &ThrustSamples) -> Result<f64> {
        samples.check()?;
        if samples.is_empty() {
            return Err(Error::InvalidArgument("mean squared error of no samples".into()));
        }
        let pred = self.predict_batch(&samples.features)?;
        let sse: f64 = pred.iter().zip(&samples.targets).map(|(p, t)| (p - t) * (p - t)).sum();
        Ok(sse / samples.len() as f64)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            dims: self.dims(),
            weights: self
                .layers
                .iter()
                .map(|l| l.weights.transpose().as_slice().to_vec())
                .collect(),
            biases: self.layers.iter().map(|l| l.bias.as_slice().to_vec()).collect(),
            feature_mean: self.input.mean.clone(),
            feature_std: self.input.std.clone(),
            target_mean: self.target_mean,
            target_std: self.target_std,
            training: self.log.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| Error::Config(format!("model file: {e}")))?;
        if f.format != MODEL_FORMAT {
            return Err(Error::Config(format!("model file: unknown format `{}`", f.format)));
        }
        if f.version != MODEL_VERSION {
            return Err(Error::Config(format!("model file: unsupported version {}", f.version)));
        }
        check_dims(&f.dims)?;
        let n = f.dims.len() - 1;
        if f.weights.len() != n || f.biases.len() != n {
            return Err(Error::Shape(format!("model file lists {n} layers but {} weight and {} bias arrays", f.weights.len(), f.biases.len())));
        }
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let (inp, out) = (f.dims[i], f.dims[i + 1]);
            if f.weights[i].len() != inp * out || f.biases[i].len() != out {
                return Err(Error::Shape(format!("layer {i} arrays do not match {inp} -> {out}")));
            }
            layers.push(Layer {
                weights: DMatrix::from_row_slice(out, inp, &f.weights[i]),
                bias: DVector::from_vec(f.biases[i].clone()),
            });
        }
        let model = ThrustModel {
            layers,
            input: Normalization {
                mean: f.feature_mean,
                std: f.feature_std,
            },
            target_mean: f.target_mean,
            target_std: f.target_std,
            log: f.training,
        };
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Shape(format!("layer dimensions {dims:?} need at least an input and an output, all nonzero")));
    }
    if dims.last() != Some(&1) {
        return Err(Error::Shape(format!("the output layer must have one unit, got {dims:?}")));
    }
    Ok(())
}

pub fn predict_thrust(model: &ThrustModel, features: &[f64]) -> Result<f64> {
    model.predict(features)
}

struct Moments {
    m: Vec<(DMatrix<f64>, DVector<f64>)>,
    v: Vec<(DMatrix<f64>, DVector<f64>)>,
}

/// Trains a fresh network with Adam on the mean squared error of the
/// standardized targets. Deterministic for a given `cfg.seed`.
pub fn train_thrust_model(train: &ThrustSamples, cfg: &TrainConfig) -> Result<ThrustModel> {
    cfg.check()?;
    train.check()?;
    if train.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if let Some(i) = train.targets.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("training target {i}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = train.features[0].len();
    let mut dims = vec![d];
    dims.extend(&cfg.hidden);
    dims.push(1);
    let input = Normalization::fit(&train.features)?;
    let n = train.len();
    let target_mean = train.targets.iter().sum::<f64>() / n as f64;
    let target_var = train.targets.iter().map(|t| (t - target_mean).powi(2)).sum::<f64>() / n as f64;
    let target_std = target_var.sqrt().max(STD_FLOOR);
    let mut model = ThrustModel {
        layers: dims.windows(2).map(|w| Layer::glorot(w[0], w[1], &mut rng)).collect(),
        input,
        target_mean,
        target_std,
        log: None,
    };
    let x_all = model.normalized_columns(&train.features)?;
    let t_all: Vec<f64> = train.targets.iter().map(|t| (t - target_mean) / target_std).collect();

    let zeros = |l: &Layer| (DMatrix::zeros(l.weights.nrows(), l.weights.ncols()), DVector::zeros(l.bias.len()));
    let mut mom = Moments {
        m: model.layers.iter().map(zeros).collect(),
        v: model.layers.iter().map(zeros).collect(),
    };
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..n).collect();
    let mut train_mse = Vec::with_capacity(cfg.epochs);
    let last = model.layers.len() - 1;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bs = batch.len();
            let x = DMatrix::from_fn(d, bs, |r, c| x_all[(r, batch[c])]);
            let mut acts = vec![x];
            for (i, l) in model.layers.iter().enumerate() {
                let mut z = l.apply(acts.last().expect("input"));
                if i < last {
                    z.apply(|v| *v = v.max(0.0));
                }
                acts.push(z);
            }
            let y = acts.last().expect("output");
            let mut delta = DMatrix::from_fn(1, bs, |_, c| 2.0 * (y[(0, c)] - t_all[batch[c]]) / bs as f64);
            step += 1;
            let c1 = 1.0 - b1.powi(step);
            let c2 = 1.0 - b2.powi(step);
            let lr = cfg.learning_rate;
            for i in (0..model.layers.len()).rev() {
                let gw = &delta * acts[i].transpose();
                let gb = DVector::from_fn(delta.nrows(), |r, _| delta.row(r).sum());
                if i > 0 {
                    let mut back = model.layers[i].weights.transpose() * &delta;
                    back.zip_apply(&acts[i], |g, a| {
                        if a <= 0.0 {
                            *g = 0.0
                        }
                    });
                    delta = back;
                }
                let layer = &mut model.layers[i];
                let (mw, mb) = &mut mom.m[i];
                let (vw, vb) = &mut mom.v[i];
                adam_update(layer.weights.as_mut_slice(), gw.as_slice(), mw.as_mut_slice(), vw.as_mut_slice(), lr, c1, c2, eps);
                adam_update(layer.bias.as_mut_slice(), gb.as_slice(), mb.as_mut_slice(), vb.as_mut_slice(), lr, c1, c2, eps);
            }
        }
        let mse = model.mse(train)?;
        if !mse.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch} is {mse}")));
        }
        train_mse.push(mse);
    }
    model.log = Some(TrainingLog {
        seed: cfg.seed,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        train_mse,
    });
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64, eps: f64) {
    for i in 0..p.len() {
        m[i] = 0.9 * m[i] + 0.1 * g[i];
        v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub id: String,
    pub amplitude: f64,
    pub frequency: f64,
    pub samples: usize,
    pub mse: f64,
    /// Time averages (N) over the samples with a feature vector.
    pub mean_measured: f64,
    pub mean_predicted: f64,
    pub mean_ebt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThrustMetrics {
    pub samples: usize,
    pub mse: f64,
    pub r2: f64,
    pub trials: Vec<TrialReport>,
}

/// `1 − SS_res / SS_tot` about the mean of `targets`.
pub fn r_squared(predicted: &[f64], targets: &[f64]) -> f64 {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    let ss_res: f64 = predicted.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    1.0 - ss_res / ss_tot
}

/// Predicted, measured and elongated-body thrust of one trial, per sample
/// from index 1 on: `(t, f_measured, f_ebt, f_predicted)`.
pub fn trial_predictions(model: &ThrustModel, trial: &ThrustTrial, ebt: &EbtParams) -> Result<Vec<[f64; 4]>> {
    let samples = ThrustSamples::from_trials(std::slice::from_ref(trial))?;
    let pred = model.predict_batch(&samples.features)?;
    let m = ebt.virtual_mass();
    Ok((1..trial.len())
        .zip(pred)
        .map(|(i, p)| [trial.t[i], trial.force[i], ebt_thrust(trial.tip_lateral_velocity(i), m), p])
        .collect())
}

/// Plot-ready `t,f_measured,f_ebt,f_predicted` table.
pub fn prediction_table(rows: &[[f64; 4]]) -> String {
    let mut out = String::from("t,f_measured,f_ebt,f_predicted\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r[0], r[1], r[2], r[3]);
    }
    out
}

/// Aggregate and per-trial errors, with the elongated-body baseline
/// averaged over the same samples.
pub fn evaluate_thrust_model(model: &ThrustModel, trials: &[ThrustTrial], ebt: &EbtParams) -> Result<ThrustMetrics> {
    ebt.check()?;
    let samples = ThrustSamples::from_trials(trials)?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no validation samples".into()));
    }
    let pred = model.predict_batch(&samples.features)?;
    let mse = model.mse(&samples)?;
    let r2 = r_squared(&pred, &samples.targets);
    let reports = trials
        .par_iter()
        .map(|trial| {
            let rows = trial_predictions(model, trial, ebt)?;
            let k = rows.len() as f64;
            let mean = |c: usize| rows.iter().map(|r| r[c]).sum::<f64>() / k;
            Ok(TrialReport {
                id: trial.id.clone(),
                amplitude: trial.amplitude,
                frequency: trial.frequency,
                samples: rows.len(),
                mse: rows.iter().map(|r| (r[3] - r[1]).powi(2)).sum::<f64>() / k,
                mean_measured: mean(1),
                mean_predicted: mean(3),
                mean_ebt: mean(2),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThrustMetrics {
        samples: samples.len(),
        mse,
        r2,
        trials: reports,
    })
}
