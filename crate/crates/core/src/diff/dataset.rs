use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Top-view marker coordinates `(x, y)` in metres.
pub type Planar = [f64; 2];

pub fn planar(p: &Vec3) -> Planar {
    [p.x, p.y]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Chamber pressures (Pa) at the time of the observation.
    pub pressures: Vec<f64>,
    /// `None` where a marker was not tracked.
    pub markers: Vec<Option<Planar>>,
    /// Rollout step index for dynamic data.
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerDataset {
    /// Body length used to make the loss dimensionless (m).
    pub body_length: f64,
    pub observations: Vec<Observation>,
}

const HEADER_KEY: &str = "# body_length =";

impl MarkerDataset {
    pub fn check(&self) -> Result<()> {
        if !(self.body_length > 0.0) || !self.body_length.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "body length must be positive, got {}",
                self.body_length
            )));
        }
        let Some(first) = self.observations.first() else {
            return Ok(());
        };
        for (i, o) in self.observations.iter().enumerate() {
            if o.markers.len() != first.markers.len() {
                return Err(Error::Shape(format!(
                    "observation {i} has {} markers, observation 0 has {}",
                    o.markers.len(),
                    first.markers.len()
                )));
            }
            if o.pressures.len() != first.pressures.len() {
                return Err(Error::Shape(format!(
                    "observation {i} has {} pressures, observation 0 has {}",
                    o.pressures.len(),
                    first.pressures.len()
                )));
            }
            if o.step.is_some() != first.step.is_some() {
                return Err(Error::InvalidArgument(
                    "step indices must be given for every observation or for none".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn num_markers(&self) -> usize {
        self.observations.first().map_or(0, |o| o.markers.len())
    }

    pub fn is_dynamic(&self) -> bool {
        self.observations.iter().any(|o| o.step.is_some())
    }

    /// Comma-separated text: a `# body_length = L` line, a header row, then
    /// one row per observation. Missing markers and step indices are empty
    /// fields.
    pub fn to_text(&self) -> String {
        let nc = self.observations.first().map_or(0, |o| o.pressures.len());
        let nm = self.num_markers();
        let mut out = format!("{HEADER_KEY} {}\n", self.body_length);
        let mut cols = vec!["observation".to_string(), "step".to_string()];
        cols.extend((0..nc).map(|j| format!("chamber_{j}_pressure")));
        for k in 0..nm {
            cols.push(format!("marker_{k}_x"));
            cols.push(format!("marker_{k}_y"));
        }
        out.push_str(&cols.join(","));
        out.push('\n');
        for (i, o) in self.observations.iter().enumerate() {
            let _ = write!(out, "{i},");
            if let Some(s) = o.step {
                let _ = write!(out, "{s}");
            }
            for p in &o.pressures {
                let _ = write!(out, ",{p}");
            }
            for m in &o.markers {
                match m {
                    Some([x, y]) => {
                        let _ = write!(out, ",{x},{y}");
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (n, first) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let body_length: f64 = first
            .strip_prefix(HEADER_KEY)
            .ok_or_else(|| err(n, format!("expected `{HEADER_KEY} <metres>`")))?
            .trim()
            .parse()
            .map_err(|e| err(n, format!("body length: {e}")))?;
        let (n, header) = lines.next().ok_or_else(|| err(2, "missing header row".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "observation" || cols[1] != "step" {
            return Err(err(n, "header must start with `observation,step`".into()));
        }
        let nc = cols.iter().filter(|c| c.ends_with("_pressure")).count();
        let rest = cols.len() - 2 - nc;
        if rest % 2 != 0 {
            return Err(err(n, "marker columns must come in x, y pairs".into()));
        }
        let nm = rest / 2;
        let mut observations = Vec::new();
        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != cols.len() {
                return Err(err(n, format!("expected {} fields, found {}", cols.len(), f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(n, format!("`{s}`: {e}")));
            let step = match f[1] {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|e| err(n, format!("step `{s}`: {e}")))?),
            };
            let pressures = f[2..2 + nc].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let mut markers = Vec::with_capacity(nm);
            for k in 0..nm {
                let (x, y) = (f[2 + nc + 2 * k], f[3 + nc + 2 * k]);
                markers.push(match (x, y) {
                    ("", "") => None,
                    ("", _) | (_, "") => {
                        return Err(err(n, format!("marker {k} has only one coordinate")));
                    }
                    _ => Some([num(x)?, num(y)?]),
                });
            }
            observations.push(Observation {
                pressures,
                markers,
                step,
            });
        }
        let d = MarkerDataset {
            body_length,
            observations,
        };
        d.check()?;
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Mean top-view distance between simulated and observed markers, over
/// every tracked marker of every observation, divided by `body_length`.
/// Untracked markers are skipped; with none tracked the loss is zero.
pub fn loss_markers(
    simulated: &[Vec<Planar>],
    observed: &[Vec<Option<Planar>>],
    body_length: f64,
) -> Result<f64> {
    Ok(loss_and_weights(simulated, observed, body_length)?.0)
}

/// Loss plus its gradient with respect to every simulated coordinate.
pub(crate) fn loss_and_weights(
    simulated: &[Vec<Planar>],
    observed: &[Vec<Option<Planar>>],
    body_length: f64,
) -> Result<(f64, Vec<Vec<Planar>>)> {
    if simulated.len() != observed.len() {
        return Err(Error::Shape(format!(
            "{} simulated observations, {} observed",
            simulated.len(),
            observed.len()
        )));
    }
    if !(body_length > 0.0) {
        return Err(Error::InvalidArgument(format!("body length must be positive, got {body_length}")));
    }
    let mut count = 0usize;
    for (i, (s, o)) in simulated.iter().zip(observed).enumerate() {
        if s.len() != o.len() {
            return Err(Error::Shape(format!(
                "observation {i}: {} simulated markers, {} observed",
                s.len(),
                o.len()
            )));
        }
        count += o.iter().flatten().count();
    }
    let mut grads: Vec<Vec<Planar>> = simulated.iter().map(|s| vec![[0.0; 2]; s.len()]).collect();
    if count == 0 {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / (body_length * count as f64);
    let mut total = 0.0;
    for ((s, o), g) in simulated.iter().zip(observed).zip(&mut grads) {
        for ((sp, op), gp) in s.iter().zip(o).zip(g) {
            let Some(op) = op else { continue };
            let d = [sp[0] - op[0], sp[1] - op[1]];
            let dist = d[0].hypot(d[1]);
            total += dist;
            // The distance has no gradient at zero; take the zero subgradient.
            if dist > 0.0 {
                *gp = [scale * d[0] / dist, scale * d[1] / dist];
            }
        }
    }
    Ok((total * scale, grads))
}
