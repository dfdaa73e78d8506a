//! Composite tetrahedral meshes: body/spine regions, chamber surfaces,
//! clamped nodes and marker attachments.

mod beam;
mod io;
mod validate;

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use beam::{generate_composite_beam, BeamSpec, CellBox, Face};
pub use io::{load_mesh, mesh_from_str, mesh_to_string, save_mesh, MESH_FORMAT_VERSION};
pub use validate::{validate, ValidationReport};

pub type Vec3 = Vector3<f64>;

/// Barycentric weights below this are still treated as "inside".
pub const INSIDE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Body,
    Spine,
}

impl Region {
    pub fn index(self) -> usize {
        match self {
            Region::Body => 0,
            Region::Spine => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Region::Body => "BODY",
            Region::Spine => "SPINE",
        }
    }
}

/// Interior surface of one air chamber. Triangle normals point out of the
/// cavity into the surrounding solid, so positive pressure pushes along them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamberSurface {
    pub id: usize,
    pub triangles: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerAttachment {
    pub tet: usize,
    pub weights: [f64; 4],
}

/// Which side of the spine a chamber sits on (lateral `y` axis).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TetMesh {
    pub nodes: Vec<Vec3>,
    pub tets: Vec<[usize; 4]>,
    pub regions: Vec<Region>,
    pub chambers: Vec<ChamberSurface>,
    /// Sorted, unique.
    pub fixed_nodes: Vec<usize>,
    pub markers: Vec<MarkerAttachment>,
    pub body_length: f64,
}

pub(crate) fn signed_volume(p: [&Vec3; 4]) -> f64 {
    let m = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    m.determinant() / 6.0
}

impl TetMesh {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.nodes.len()
    }

    pub fn tet_positions<'a>(&self, x: &'a [Vec3], tet: usize) -> [&'a Vec3; 4] {
        let t = self.tets[tet];
        [&x[t[0]], &x[t[1]], &x[t[2]], &x[t[3]]]
    }

    pub fn rest_volume(&self, tet: usize) -> f64 {
        signed_volume(self.tet_positions(&self.nodes, tet))
    }

    pub fn total_rest_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.rest_volume(t)).sum()
    }

    pub fn chamber(&self, id: usize) -> Option<&ChamberSurface> {
        self.chambers.iter().find(|c| c.id == id)
    }

    /// `true` for every node index listed in `fixed_nodes`.
    pub fn fixed_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for &n in &self.fixed_nodes {
            mask[n] = true;
        }
        mask
    }

    /// Lateral side of a chamber, judged by its node centroid against the
    /// mid-plane of the mesh bounding box in `y`.
    pub fn chamber_side(&self, id: usize) -> Option<Side> {
        let chamber = self.chamber(id)?;
        let (lo, hi) = self.bounding_box();
        let mid = 0.5 * (lo.y + hi.y);
        let mut sum = 0.0;
        let mut count = 0usize;
        for tri in &chamber.triangles {
            for &n in tri {
                sum += self.nodes[n].y;
                count += 1;
            }
        }
        if count == 0 {
            return None;
        }
        Some(if sum / (count as f64) < mid {
            Side::Left
        } else {
            Side::Right
        })
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in &self.nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Barycentric coordinates of `point` with respect to tet `tet` at rest.
    pub fn barycentric(&self, tet: usize, point: &Vec3) -> [f64; 4] {
        let p = self.tet_positions(&self.nodes, tet);
        let dm = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
        let w = dm
            .lu()
            .solve(&(point - p[0]))
            .unwrap_or_else(|| Vec3::repeat(f64::NAN));
        [1.0 - w.x - w.y - w.z, w.x, w.y, w.z]
    }

    /// Locates the tet containing `point` in the rest configuration.
    ///
    /// Among all tets whose barycentric coordinates are no more negative
    /// than [`INSIDE_TOLERANCE`], the one with the largest minimum weight
    /// wins (lowest index on ties). Tiny negative weights are clipped and
    /// the rest renormalized.
    pub fn attach_marker(&self, point: Vec3) -> Result<MarkerAttachment> {
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for tet in 0..self.tets.len() {
            let w = self.barycentric(tet, &point);
            let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(min >= -INSIDE_TOLERANCE) {
                continue;
            }
            if best.as_ref().map_or(true, |b| min > b.2) {
                best = Some((tet, w, min));
            }
        }
        let (tet, mut w, _) = best.ok_or(Error::PointOutsideMesh(point.x, point.y, point.z))?;
        if w.iter().any(|&v| v < 0.0) {
            for v in w.iter_mut() {
                *v = v.max(0.0);
            }
            let sum: f64 = w.iter().sum();
            for v in w.iter_mut() {
                *v /= sum;
            }
        }
        Ok(MarkerAttachment { tet, weights: w })
    }

    /// Replaces the marker list by attachments for the given rest points.
    pub fn with_markers(mut self, points: &[Vec3]) -> Result<Self> {
        self.markers = points
            .iter()
            .map(|p| self.attach_marker(*p))
            .collect::<Result<_>>()?;
        Ok(self)
    }

    pub fn marker_position(&self, x: &[Vec3], marker: &MarkerAttachment) -> Vec3 {
        let t = self.tets[marker.tet];
        (0..4).fold(Vec3::zeros(), |acc, a| acc + x[t[a]] * marker.weights[a])
    }

    pub fn marker_positions(&self, x: &[Vec3]) -> Vec<Vec3> {
        self.markers
            .iter()
            .map(|m| self.marker_position(x, m))
            .collect()
    }

    /// Faces referenced by exactly one tet, oriented outward.
    pub fn boundary_faces(&self) -> Vec<[usize; 3]> {
        // Local faces opposite each vertex, wound so the normal points away
        // from that vertex for a positively oriented tet.
        const LOCAL: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];
        let mut seen: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
        let mut order = Vec::new();
        for t in &self.tets {
            for f in LOCAL {
                let face = [t[f[0]], t[f[1]], t[f[2]]];
                let mut key = face;
                key.sort_unstable();
                let entry = seen.entry(key).or_insert_with(|| {
                    order.push(key);
                    (0, face)
                });
                entry.0 += 1;
            }
        }
        order
            .into_iter()
            .filter_map(|k| {
                let (count, face) = seen[&k];
                (count == 1).then_some(face)
            })
            .collect()
    }
}
