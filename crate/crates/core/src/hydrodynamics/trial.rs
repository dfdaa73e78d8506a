use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tracked markers per trial; the last one sits on the tail tip.
pub const NUM_MARKERS: usize = 3;
/// Positions and velocities of every marker, differential pressure and
/// its rate.
pub const NUM_FEATURES: usize = 4 * NUM_MARKERS + 2;
/// Relative spread allowed between consecutive sample intervals.
pub const SAMPLING_TOLERANCE: f64 = 0.01;

const HEADER: &str = "t,m1x,m1y,m2x,m2y,m3x,m3y,pL,pR,f_measured";

/// One actuation run of the thrust rig. Marker coordinates are top-view
/// `(x, y)` with `x` along the body and `y` lateral.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrustTrial {
    pub id: String,
    /// Pressure amplitude (Pa).
    pub amplitude: f64,
    /// Actuation frequency (Hz).
    pub frequency: f64,
    pub sample_period: f64,
    pub t: Vec<f64>,
    pub markers: Vec<[[f64; 2]; NUM_MARKERS]>,
    pub p_left: Vec<f64>,
    pub p_right: Vec<f64>,
    pub force: Vec<f64>,
}

impl ThrustTrial {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.t.len();
        let lens = [self.markers.len(), self.p_left.len(), self.p_right.len(), self.force.len()];
        if lens.iter().any(|l| *l != n) {
            return Err(Error::Shape(format!(
                "trial {}: {n} times but channel lengths {lens:?}",
                self.id
            )));
        }
        if !(self.sample_period > 0.0) || !self.sample_period.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "trial {}: sample period must be positive, got {}",
                self.id, self.sample_period
            )));
        }
        if self.id.is_empty() || self.id.contains(['\n', '\r']) {
            return Err(Error::InvalidArgument("trial id must be a non-empty single line".into()));
        }
        Ok(())
    }

    /// Signed differential pressure `p_L − p_R`.
    pub fn differential_pressure(&self, i: usize) -> f64 {
        self.p_left[i] - self.p_right[i]
    }

    /// Backward-difference lateral velocity of the tip marker at `i ≥ 1`.
    pub fn tip_lateral_velocity(&self, i: usize) -> f64 {
        let tip = NUM_MARKERS - 1;
        (self.markers[i][tip][1] - self.markers[i - 1][tip][1]) / self.sample_period
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# id = {}", self.id);
        let _ = writeln!(out, "# amplitude = {}", self.amplitude);
        let _ = writeln!(out, "# frequency = {}", self.frequency);
        let _ = writeln!(out, "# sample_period = {}", self.sample_period);
        out.push_str(HEADER);
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(out, "{}", self.t[i]);
            for m in &self.markers[i] {
                let _ = write!(out, ",{},{}", m[0], m[1]);
            }
            let _ = writeln!(out, ",{},{},{}", self.p_left[i], self.p_right[i], self.force[i]);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses the trial table. Metadata comes from `# key = value` lines;
    /// without a `sample_period` entry the period is inferred from the
    /// time column. Sampling must be uniform within 1%.
    pub fn parse(text: &str, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let err = |line: usize, msg: String| Error::Parse {
            path: path.clone(),
            line,
            msg,
        };
        let mut trial = ThrustTrial {
            id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "trial".into()),
            amplitude: 0.0,
            frequency: 0.0,
            sample_period: 0.0,
            t: Vec::new(),
            markers: Vec::new(),
            p_left: Vec::new(),
            p_right: Vec::new(),
            force: Vec::new(),
        };
        let mut declared_period = None;
        let mut header_seen = false;
        let mut time_lines = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.split_once('=') else {
                    continue;
                };
                let value = value.trim();
                let number = || {
                    value
                        .parse::<f64>()
                        .map_err(|_| err(line_no, format!("`{}` is not a number", value)))
                };
                match key.trim() {
                    "id" => trial.id = value.to_string(),
                    "amplitude" => trial.amplitude = number()?,
                    "frequency" => trial.frequency = number()?,
                    "sample_period" => declared_period = Some(number()?),
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols.join(",") != HEADER {
                    return Err(err(line_no, format!("expected header `{HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 10 {
                return Err(err(line_no, format!("expected 10 fields, found {}", fields.len())));
            }
            let mut v = [0.0; 10];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(line_no, format!("`{f}` is not a finite number")))?;
            }
            if let Some(prev) = trial.t.last() {
                if !(v[0] > *prev) {
                    return Err(err(line_no, format!("time {} does not increase", v[0])));
                }
            }
            trial.t.push(v[0]);
            trial.markers.push([[v[1], v[2]], [v[3], v[4]], [v[5], v[6]]]);
            trial.p_left.push(v[7]);
            trial.p_right.push(v[8]);
            trial.force.push(v[9]);
            time_lines.push(line_no);
        }
        if !header_seen {
            return Err(err(1, "missing header".into()));
        }
        let n = trial.t.len();
        if n < 2 {
            return Err(err(time_lines.last().copied().unwrap_or(1), "a trial needs at least two samples".into()));
        }
        let period = declared_period.unwrap_or((trial.t[n - 1] - trial.t[0]) / (n - 1) as f64);
        for i in 1..n {
            let dt = trial.t[i] - trial.t[i - 1];
            if (dt - period).abs() > SAMPLING_TOLERANCE * period {
                return Err(err(
                    time_lines[i],
                    format!("non-uniform sampling: interval {dt} differs from the period {period} by more than 1%"),
                ));
            }
        }
        trial.sample_period = period;
        trial.check()?;
        Ok(trial)
    }
}

/// Feature vector at sample `i ≥ 1`: marker positions, their backward
/// differences over the sample period, `p_L − p_R` and its backward
/// difference.
pub fn features_from_trial(trial: &ThrustTrial, i: usize) -> Result<[f64; NUM_FEATURES]> {
    if i == 0 {
        return Err(Error::InvalidArgument("features need a previous sample; index 0 has none".into()));
    }
    if i >= trial.len() {
        return Err(Error::InvalidArgument(format!("sample {i} beyond trial length {}", trial.len())));
    }
    let h = trial.sample_period;
    let mut f = [0.0; NUM_FEATURES];
    for k in 0..NUM_MARKERS {
        for a in 0..2 {
            f[2 * k + a] = trial.markers[i][k][a];
            f[2 * NUM_MARKERS + 2 * k + a] = (trial.markers[i][k][a] - trial.markers[i - 1][k][a]) / h;
        }
    }
    let dp = trial.differential_pressure(i);
    f[4 * NUM_MARKERS] = dp;
    f[4 * NUM_MARKERS + 1] = (dp - trial.differential_pressure(i - 1)) / h;
    Ok(f)
}

/// Regression samples with the trial each one came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThrustSamples {
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub trial: Vec<usize>,
}

impl ThrustSamples {
    /// Every sample from index 1 on, trial by trial.
    pub fn from_trials(trials: &[ThrustTrial]) -> Result<Self> {
        let mut s = ThrustSamples::default();
        for (k, trial) in trials.iter().enumerate() {
            trial.check()?;
            for i in 1..trial.len() {
                s.features.push(features_from_trial(trial, i)?.to_vec());
                s.targets.push(trial.force[i]);
                s.trial.push(k);
            }
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.features.len() != self.targets.len() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} targets",
                self.features.len(),
                self.targets.len()
            )));
        }
        if let Some(d) = self.features.first().map(Vec::len) {
            if let Some(r) = self.features.iter().position(|f| f.len() != d) {
                return Err(Error::Shape(format!("feature row {r} has {} entries, expected {d}", self.features[r].len())));
            }
        }
        Ok(())
    }
}

/// How whole trials are divided between training and validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    /// Seeded shuffle; `fraction` of the trials (rounded) train.
    ByTrial { fraction: f64 },
    /// Trials at these frequencies (Hz) validate, the rest train.
    ByFrequency { holdout: Vec<f64> },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::ByTrial { fraction: 0.8 }
    }
}

impl std::str::FromStr for SplitSpec {
    type Err = Error;

    /// `by_trial:0.8` or `by_frequency:4[,5...]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("split `{s}`: expected by_trial:<fraction> or by_frequency:<hz>[,<hz>...]"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "by_trial" => Ok(SplitSpec::ByTrial {
                fraction: arg.trim().parse().map_err(|_| bad())?,
            }),
            "by_frequency" => Ok(SplitSpec::ByFrequency {
                holdout: arg
                    .split(',')
                    .map(|f| f.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?,
            }),
            _ => Err(bad()),
        }
    }
}

fn same_frequency(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Assigns whole trials to `(train, validation)`. Trial order is kept
/// within each side.
pub fn build_thrust_dataset(
    trials: &[ThrustTrial],
    split: &SplitSpec,
    seed: u64,
) -> Result<(Vec<ThrustTrial>, Vec<ThrustTrial>)> {
    if trials.is_empty() {
        return Err(Error::InvalidArgument("no trials to split".into()));
    }
    let validation: Vec<bool> = match split {
        SplitSpec::ByTrial { fraction } => {
            if !(*fraction > 0.0 && *fraction < 1.0) {
                return Err(Error::InvalidArgument(format!("split fraction must lie in (0, 1), got {fraction}")));
            }
            let n_train = (fraction * trials.len() as f64).round() as usize;
            if n_train == 0 || n_train == trials.len() {
                return Err(Error::InvalidArgument(format!(
                    "fraction {fraction} of {} trials leaves one side empty",
                    trials.len()
                )));
            }
            let mut order: Vec<usize> = (0..trials.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut v = vec![false; trials.len()];
            for &i in &order[n_train..] {
                v[i] = true;
            }
            v
        }
        SplitSpec::ByFrequency { holdout } => {
            if holdout.is_empty() {
                return Err(Error::InvalidArgument("no holdout frequencies given".into()));
            }
            for f in holdout {
                if !trials.iter().any(|t| same_frequency(t.frequency, *f)) {
                    return Err(Error::InvalidArgument(format!("no trials at holdout frequency {f} Hz")));
                }
            }
            let v: Vec<bool> = trials
                .iter()
                .map(|t| holdout.iter().any(|f| same_frequency(t.frequency, *f)))
                .collect();
            if v.iter().all(|x| *x) {
                return Err(Error::InvalidArgument("every trial is held out; nothing left to train on".into()));
            }
            v
        }
    };
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (t, is_val) in trials.iter().zip(validation) {
        if is_val {
            val.push(t.clone());
        } else {
            train.push(t.clone());
        }
    }
    Ok((train, val))
}
