//! Structured hex-to-tet generator for clamped composite beams.
//!
//! Axes: `x` runs along the body (head to tail), `y` is lateral and `z` is
//! vertical. The spine is a slab centred in `y`; chambers are hollowed
//! cell boxes whose exposed faces become chamber surfaces.

use serde::{Deserialize, Serialize};

use super::{signed_volume, ChamberSurface, Region, TetMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    fn axis(self) -> usize {
        match self {
            Face::XMin | Face::XMax => 0,
            Face::YMin | Face::YMax => 1,
            Face::ZMin | Face::ZMax => 2,
        }
    }

    fn is_max(self) -> bool {
        matches!(self, Face::XMax | Face::YMax | Face::ZMax)
    }
}

/// Half-open box of cell indices `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        CellBox { lo, hi }
    }

    fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] < self.hi[a])
    }

    /// True when the boxes overlap or are closer than one full cell wall.
    fn too_close(&self, other: &CellBox) -> bool {
        (0..3).all(|a| self.lo[a] <= other.hi[a] && other.lo[a] <= self.hi[a])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    /// `(Lx, Ly, Lz)` in metres.
    pub dimensions: [f64; 3],
    pub resolution: [usize; 3],
    pub spine_half_thickness: f64,
    /// The spine stops at this distance from the `x = 0` end; it runs the
    /// full length when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spine_length: Option<f64>,
    #[serde(default)]
    pub chamber_blocks: Vec<CellBox>,
    #[serde(default = "default_fixed_face")]
    pub fixed_face: Face,
    /// Optional graded grid lines per axis (`resolution + 1` increasing
    /// values from 0 to the dimension). Uniform spacing when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_coords: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_coords: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_coords: Option<Vec<f64>>,
}

fn default_fixed_face() -> Face {
    Face::XMin
}

impl BeamSpec {
    pub fn uniform(dimensions: [f64; 3], resolution: [usize; 3]) -> Self {
        BeamSpec {
            dimensions,
            resolution,
            spine_half_thickness: 0.0,
            spine_length: None,
            chamber_blocks: Vec::new(),
            fixed_face: Face::XMin,
            x_coords: None,
            y_coords: None,
            z_coords: None,
        }
    }

    pub fn grid_coords(&self) -> Result<[Vec<f64>; 3]> {
        let given = [&self.x_coords, &self.y_coords, &self.z_coords];
        let mut out: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            let n = self.resolution[a];
            let len = self.dimensions[a];
            out[a] = match given[a] {
                Some(c) => {
                    let tol = 1e-12 * len;
                    if c.len() != n + 1 {
                        return Err(Error::BeamSpec(format!(
                            "axis {a}: {} grid coordinates for {n} cells",
                            c.len()
                        )));
                    }
                    if c[0].abs() > tol || (c[n] - len).abs() > tol {
                        return Err(Error::BeamSpec(format!(
                            "axis {a}: grid coordinates must span [0, {len}]"
                        )));
                    }
                    if c.windows(2).any(|w| !(w[1] > w[0])) {
                        return Err(Error::BeamSpec(format!(
                            "axis {a}: grid coordinates must increase strictly"
                        )));
                    }
                    let mut c = c.clone();
                    c[0] = 0.0;
                    c[n] = len;
                    c
                }
                None => (0..=n).map(|i| len * i as f64 / n as f64).collect(),
            };
        }
        Ok(out)
    }

    /// Longest grid spacing against the `Lx / 50` edge-length guideline.
    /// Returns a warning message when the grid is coarser.
    pub fn edge_check(&self) -> Option<String> {
        let coords = self.grid_coords().ok()?;
        let longest = coords
            .iter()
            .flat_map(|c| c.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max);
        let target = self.dimensions[0] / 50.0;
        (longest > target * (1.0 + 1e-9)).then(|| {
            format!(
                "longest grid edge {longest:.4e} m exceeds the 1/50 body-length guideline ({target:.4e} m)"
            )
        })
    }

    fn check(&self) -> Result<()> {
        for a in 0..3 {
            if self.resolution[a] == 0 {
                return Err(Error::BeamSpec(format!(
                    "resolution on axis {a} must be >= 1"
                )));
            }
            if !(self.dimensions[a] > 0.0) {
                return Err(Error::BeamSpec(format!(
                    "dimension on axis {a} must be > 0"
                )));
            }
        }
        let t = self.spine_half_thickness;
        if !(t >= 0.0) || 2.0 * t > self.dimensions[1] {
            return Err(Error::BeamSpec(format!(
                "spine thickness {:.4e} m exceeds beam width {:.4e} m",
                2.0 * t,
                self.dimensions[1]
            )));
        }
        if let Some(l) = self.spine_length {
            if !(l > 0.0) || l > self.dimensions[0] {
                return Err(Error::BeamSpec(format!(
                    "spine length {l:.4e} m outside (0, {:.4e}]",
                    self.dimensions[0]
                )));
            }
        }
        let fixed_axis = self.fixed_face.axis();
        for (i, b) in self.chamber_blocks.iter().enumerate() {
            for a in 0..3 {
                if b.lo[a] >= b.hi[a] || b.hi[a] > self.resolution[a] {
                    return Err(Error::BeamSpec(format!(
                        "chamber block {i} {:?}..{:?} is not representable at resolution {:?}",
                        b.lo, b.hi, self.resolution
                    )));
                }
            }
            let touches_fixed = if self.fixed_face.is_max() {
                b.hi[fixed_axis] == self.resolution[fixed_axis]
            } else {
                b.lo[fixed_axis] == 0
            };
            if touches_fixed {
                return Err(Error::BeamSpec(format!(
                    "chamber block {i} overlaps the fixed face {:?}",
                    self.fixed_face
                )));
            }
            for a in 0..3 {
                if b.lo[a] == 0 || b.hi[a] == self.resolution[a] {
                    return Err(Error::BeamSpec(format!(
                        "chamber block {i} touches the outer surface on axis {a}"
                    )));
                }
            }
        }
        for i in 0..self.chamber_blocks.len() {
            for j in (i + 1)..self.chamber_blocks.len() {
                if self.chamber_blocks[i].too_close(&self.chamber_blocks[j]) {
                    return Err(Error::BeamSpec(format!(
                        "chamber blocks {i} and {j} overlap or share a wall"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Kuhn subdivision of the unit cube along the 000-111 diagonal. Each entry
/// is a path of corner offsets; adjacent hexes share face diagonals.
const KUHN_PATHS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

pub fn generate_composite_beam(spec: &BeamSpec) -> Result<TetMesh> {
    spec.check()?;
    let coords = spec.grid_coords()?;
    let [nx, ny, nz] = spec.resolution;
    let cell_index = |c: [usize; 3]| (c[0] * ny + c[1]) * nz + c[2];
    let grid_node = |p: [usize; 3]| (p[0] * (ny + 1) + p[1]) * (nz + 1) + p[2];

    let mut hollow = vec![usize::MAX; nx * ny * nz];
    for (b_idx, b) in spec.chamber_blocks.iter().enumerate() {
        for i in b.lo[0]..b.hi[0] {
            for j in b.lo[1]..b.hi[1] {
                for k in b.lo[2]..b.hi[2] {
                    hollow[cell_index([i, j, k])] = b_idx;
                }
            }
        }
    }

    let mut used = vec![false; (nx + 1) * (ny + 1) * (nz + 1)];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                if hollow[cell_index([i, j, k])] != usize::MAX {
                    continue;
                }
                for corner in 0..8 {
                    let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
                    used[grid_node([i + o[0], j + o[1], k + o[2]])] = true;
                }
            }
        }
    }

    let mut remap = vec![usize::MAX; used.len()];
    let mut nodes = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                let g = grid_node([i, j, k]);
                if used[g] {
                    remap[g] = nodes.len();
                    nodes.push(Vec3::new(coords[0][i], coords[1][j], coords[2][k]));
                }
            }
        }
    }
    let node_at = |p: [usize; 3]| remap[grid_node(p)];

    let mid_y = 0.5 * spec.dimensions[1];
    let mut tets = Vec::new();
    let mut regions = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                if hollow[cell_index([i, j, k])] != usize::MAX {
                    continue;
                }
                for path in KUHN_PATHS {
                    let mut corner = [i, j, k];
                    let mut tet = [node_at(corner); 4];
                    for (s, &axis) in path.iter().enumerate() {
                        corner[axis] += 1;
                        tet[s + 1] = node_at(corner);
                    }
                    let p = [
                        &nodes[tet[0]],
                        &nodes[tet[1]],
                        &nodes[tet[2]],
                        &nodes[tet[3]],
                    ];
                    if signed_volume(p) < 0.0 {
                        tet.swap(2, 3);
                    }
                    let centroid = (0..4).fold(Vec3::zeros(), |acc, a| acc + nodes[tet[a]]) / 4.0;
                    let in_span = spec.spine_length.is_none_or(|l| centroid.x < l);
                    let region =
                        if in_span && (centroid.y - mid_y).abs() < spec.spine_half_thickness {
                            Region::Spine
                        } else {
                            Region::Body
                        };
                    tets.push(tet);
                    regions.push(region);
                }
            }
        }
    }

    let mut chambers = Vec::new();
    for (b_idx, b) in spec.chamber_blocks.iter().enumerate() {
        let mut triangles = Vec::new();
        for i in b.lo[0]..b.hi[0] {
            for j in b.lo[1]..b.hi[1] {
                for k in b.lo[2]..b.hi[2] {
                    let cell = [i, j, k];
                    for axis in 0..3 {
                        for dir in [0usize, 1] {
                            let mut nb = cell;
                            if dir == 0 {
                                nb[axis] -= 1;
                            } else {
                                nb[axis] += 1;
                            }
                            if b.contains(nb) {
                                continue;
                            }
                            triangles.extend(face_triangles(&nodes, &node_at, cell, axis, dir));
                        }
                    }
                }
            }
        }
        chambers.push(ChamberSurface {
            id: b_idx,
            triangles,
        });
    }

    let fixed_axis = spec.fixed_face.axis();
    let fixed_index = if spec.fixed_face.is_max() {
        spec.resolution[fixed_axis]
    } else {
        0
    };
    let mut fixed_nodes = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                let p = [i, j, k];
                if p[fixed_axis] == fixed_index && used[grid_node(p)] {
                    fixed_nodes.push(node_at(p));
                }
            }
        }
    }
    fixed_nodes.sort_unstable();

    Ok(TetMesh {
        nodes,
        tets,
        regions,
        chambers,
        fixed_nodes,
        markers: Vec::new(),
        body_length: spec.dimensions[0],
    })
}

/// Two triangles covering the face of `cell` normal to `axis` on side `dir`,
/// split along the min-max diagonal and wound with the normal pointing
/// away from the cell.
fn face_triangles(
    nodes: &[Vec3],
    node_at: &impl Fn([usize; 3]) -> usize,
    cell: [usize; 3],
    axis: usize,
    dir: usize,
) -> [[usize; 3]; 2] {
    let u = (axis + 1) % 3;
    let v = (axis + 2) % 3;
    let corner = |du: usize, dv: usize| {
        let mut p = cell;
        p[axis] += dir;
        p[u] += du;
        p[v] += dv;
        node_at(p)
    };
    let c00 = corner(0, 0);
    let c10 = corner(1, 0);
    let c11 = corner(1, 1);
    let c01 = corner(0, 1);
    let mut tris = [[c00, c10, c11], [c00, c11, c01]];
    let n = (nodes[c10] - nodes[c00]).cross(&(nodes[c11] - nodes[c00]));
    let sign = if dir == 1 { 1.0 } else { -1.0 };
    if n[axis] * sign < 0.0 {
        for t in tris.iter_mut() {
            t.swap(1, 2);
        }
    }
    tris
}
