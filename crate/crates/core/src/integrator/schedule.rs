use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Side, TetMesh};

/// Chamber pressures (Pa) as a function of time. Chamber indices follow
/// the order of `TetMesh::chambers`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PressureSchedule {
    Constant {
        pressures: Vec<f64>,
    },
    /// `left` chambers at `amplitude` for the first half of each period,
    /// `right` chambers for the second half.
    SquareWave {
        num_chambers: usize,
        amplitude: f64,
        frequency: f64,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// Square-wave command seen through a first-order valve lag with time
    /// constant `time_constant` (s), starting from zero pressure at `t = 0`.
    LaggedSquareWave {
        num_chambers: usize,
        amplitude: f64,
        frequency: f64,
        left: Vec<usize>,
        right: Vec<usize>,
        time_constant: f64,
    },
    /// Per-chamber `(t, p)` breakpoints, linear in between and held
    /// constant outside.
    Piecewise {
        breakpoints: Vec<Vec<(f64, f64)>>,
    },
}

impl PressureSchedule {
    pub fn constant(pressures: Vec<f64>) -> Self {
        PressureSchedule::Constant { pressures }
    }

    /// Square wave that gangs every chamber on one side of the spine.
    pub fn square_wave(mesh: &TetMesh, amplitude: f64, frequency: f64) -> Result<Self> {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for (k, c) in mesh.chambers.iter().enumerate() {
            match mesh.chamber_side(c.id) {
                Some(Side::Left) => left.push(k),
                Some(Side::Right) => right.push(k),
                None => {}
            }
        }
        let s = PressureSchedule::SquareWave {
            num_chambers: mesh.chambers.len(),
            amplitude,
            frequency,
            left,
            right,
        };
        s.check()?;
        Ok(s)
    }

    /// [`square_wave`](Self::square_wave) behind a valve with time constant
    /// `tau`; `tau = 0` gives the ideal square wave.
    pub fn lagged_square_wave(mesh: &TetMesh, amplitude: f64, frequency: f64, tau: f64) -> Result<Self> {
        let ideal = Self::square_wave(mesh, amplitude, frequency)?;
        if tau == 0.0 {
            return Ok(ideal);
        }
        let PressureSchedule::SquareWave { num_chambers, left, right, .. } = ideal else {
            unreachable!("square_wave builds a square wave")
        };
        let s = PressureSchedule::LaggedSquareWave {
            num_chambers,
            amplitude,
            frequency,
            left,
            right,
            time_constant: tau,
        };
        s.check()?;
        Ok(s)
    }

    pub fn num_chambers(&self) -> usize {
        match self {
            PressureSchedule::Constant { pressures } => pressures.len(),
            PressureSchedule::SquareWave { num_chambers, .. }
            | PressureSchedule::LaggedSquareWave { num_chambers, .. } => *num_chambers,
            PressureSchedule::Piecewise { breakpoints } => breakpoints.len(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("pressure schedule: {m}")));
        let nonneg = |p: f64| p >= 0.0 && p.is_finite();
        match self {
            PressureSchedule::Constant { pressures } => {
                if let Some(p) = pressures.iter().find(|p| !nonneg(**p)) {
                    return bad(format!("pressure {p} is negative or non-finite"));
                }
            }
            PressureSchedule::SquareWave {
                num_chambers,
                amplitude,
                frequency,
                left,
                right,
            } => {
                if !nonneg(*amplitude) {
                    return bad(format!("amplitude {amplitude} is negative or non-finite"));
                }
                if !(*frequency > 0.0) || !frequency.is_finite() {
                    return bad(format!("frequency must be positive, got {frequency}"));
                }
                if let Some(k) = left.iter().chain(right).find(|k| **k >= *num_chambers) {
                    return bad(format!("chamber index {k} out of range"));
                }
            }
            PressureSchedule::LaggedSquareWave {
                num_chambers,
                amplitude,
                frequency,
                left,
                right,
                time_constant,
            } => {
                PressureSchedule::SquareWave {
                    num_chambers: *num_chambers,
                    amplitude: *amplitude,
                    frequency: *frequency,
                    left: left.clone(),
                    right: right.clone(),
                }
                .check()?;
                if !(*time_constant > 0.0) || !time_constant.is_finite() {
                    return bad(format!("valve time constant must be positive, got {time_constant}"));
                }
            }
            PressureSchedule::Piecewise { breakpoints } => {
                for (c, pts) in breakpoints.iter().enumerate() {
                    if pts.is_empty() {
                        return bad(format!("chamber {c} has no breakpoints"));
                    }
                    if pts.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                        return bad(format!("chamber {c} breakpoint times must increase"));
                    }
                    if let Some((_, p)) = pts.iter().find(|(_, p)| !nonneg(*p)) {
                        return bad(format!(
                            "chamber {c} pressure {p} is negative or non-finite"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn pressures_at(&self, t: f64) -> Vec<f64> {
        match self {
            PressureSchedule::Constant { pressures } => pressures.clone(),
            PressureSchedule::SquareWave {
                num_chambers,
                amplitude,
                frequency,
                left,
                right,
            } => {
                let mut p = vec![0.0; *num_chambers];
                let phase = (t * frequency).rem_euclid(1.0);
                let active = if phase < 0.5 { left } else { right };
                for &k in active {
                    p[k] = *amplitude;
                }
                p
            }
            PressureSchedule::LaggedSquareWave {
                num_chambers,
                amplitude,
                frequency,
                left,
                right,
                time_constant,
            } => {
                let half = 0.5 / frequency;
                let decay = (-half / time_constant).exp();
                let t = t.max(0.0);
                let n = (t / half).floor() as usize;
                // Commanded level of `side` during half period `j`.
                let command = |even: bool, j: usize| if (j % 2 == 0) == even { *amplitude } else { 0.0 };
                let lagged = |even: bool| {
                    let mut p = 0.0;
                    for j in 0..n {
                        let c = command(even, j);
                        p = c + (p - c) * decay;
                    }
                    let c = command(even, n);
                    c + (p - c) * (-(t - n as f64 * half) / time_constant).exp()
                };
                let (pl, pr) = (lagged(true), lagged(false));
                let mut p = vec![0.0; *num_chambers];
                for &k in left {
                    p[k] = pl;
                }
                for &k in right {
                    p[k] = pr;
                }
                p
            }
            PressureSchedule::Piecewise { breakpoints } => {
                breakpoints.iter().map(|pts| interpolate(pts, t)).collect()
            }
        }
    }
}

fn interpolate(pts: &[(f64, f64)], t: f64) -> f64 {
    let (t0, p0) = pts[0];
    if t <= t0 {
        return p0;
    }
    for w in pts.windows(2) {
        let ((ta, pa), (tb, pb)) = (w[0], w[1]);
        if t <= tb {
            return pa + (pb - pa) * (t - ta) / (tb - ta);
        }
    }
    pts[pts.len() - 1].1
}
