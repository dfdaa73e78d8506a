//! Follower pressure loads on the deformed chamber walls.

use std::collections::HashMap;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::linalg::Assemble;
use crate::mesh::{ChamberSurface, TetMesh, Vec3};

/// Triangles with `|n| ≤ DEGENERATE_AREA · (longest edge)²` are dropped.
const DEGENERATE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ChamberForce {
    /// Flattened nodal forces (N).
    pub force: Vec<f64>,
    /// Indices into the chamber's triangle list that had no area.
    pub degenerate_triangles: Vec<usize>,
}

fn cross_matrix(u: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

fn area_normal(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<Vec3> {
    let n = (b - a).cross(&(c - a));
    let edge = (b - a)
        .norm_squared()
        .max((c - a).norm_squared())
        .max((c - b).norm_squared());
    (n.norm() > DEGENERATE_AREA * edge).then_some(n)
}

fn check_pressure(p: f64) -> Result<()> {
    if !(p >= 0.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "chamber pressure must be finite and non-negative, got {p}"
        )));
    }
    Ok(())
}

/// Each triangle pushes `p · area` along its normal, a third on each vertex.
pub fn chamber_force(
    mesh: &TetMesh,
    x: &[Vec3],
    chamber_id: usize,
    pressure: f64,
) -> Result<ChamberForce> {
    check_pressure(pressure)?;
    let chamber = mesh
        .chamber(chamber_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no chamber with id {chamber_id}")))?;
    let mut force = vec![0.0; 3 * x.len()];
    let mut degenerate_triangles = Vec::new();
    for (k, tri) in chamber.triangles.iter().enumerate() {
        let Some(n) = area_normal(&x[tri[0]], &x[tri[1]], &x[tri[2]]) else {
            degenerate_triangles.push(k);
            continue;
        };
        let f = n * (pressure / 6.0);
        for &v in tri {
            for d in 0..3 {
                force[3 * v + d] += f[d];
            }
        }
    }
    Ok(ChamberForce {
        force,
        degenerate_triangles,
    })
}

/// Volume enclosed by a chamber surface, `Σ a·(b×c)/6` over its triangles.
/// When the surface is closed, `p ∇V` is exactly the chamber force.
pub fn chamber_volume(mesh: &TetMesh, x: &[Vec3], chamber_id: usize) -> Result<f64> {
    let chamber = mesh
        .chamber(chamber_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no chamber with id {chamber_id}")))?;
    Ok(chamber
        .triangles
        .iter()
        .map(|t| x[t[0]].dot(&x[t[1]].cross(&x[t[2]])) / 6.0)
        .sum())
}

/// True when every edge of the surface is used exactly once in each
/// direction.
pub fn is_closed(surface: &ChamberSurface) -> bool {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for t in &surface.triangles {
        for k in 0..3 {
            *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    !directed.is_empty()
        && directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
}

fn check_pressures(mesh: &TetMesh, pressures: &[f64]) -> Result<()> {
    if pressures.len() != mesh.chambers.len() {
        return Err(Error::Shape(format!(
            "{} pressures for {} chambers",
            pressures.len(),
            mesh.chambers.len()
        )));
    }
    pressures.iter().try_for_each(|&p| check_pressure(p))
}

/// Sum of all chamber loads; `pressures` follows the order of `mesh.chambers`.
pub fn actuation_force(mesh: &TetMesh, x: &[Vec3], pressures: &[f64]) -> Result<Vec<f64>> {
    check_pressures(mesh, pressures)?;
    let mut total = vec![0.0; 3 * x.len()];
    for (c, &p) in mesh.chambers.iter().zip(pressures) {
        if p == 0.0 {
            continue;
        }
        let f = chamber_force(mesh, x, c.id, p)?;
        total.iter_mut().zip(&f.force).for_each(|(t, v)| *t += v);
    }
    Ok(total)
}

/// Visits the 3×3 blocks `∂f_k/∂x_j` of every loaded triangle.
fn for_each_block(
    mesh: &TetMesh,
    x: &[Vec3],
    pressures: &[f64],
    mut visit: impl FnMut(&[usize; 3], &[Matrix3<f64>; 3]),
) -> Result<()> {
    check_pressures(mesh, pressures)?;
    for (c, &p) in mesh.chambers.iter().zip(pressures) {
        if p == 0.0 {
            continue;
        }
        for tri in &c.triangles {
            let [a, b, cc] = [&x[tri[0]], &x[tri[1]], &x[tri[2]]];
            if area_normal(a, b, cc).is_none() {
                continue;
            }
            let s = p / 6.0;
            // n = (b − a) × (c − a)
            let dn = [
                cross_matrix(&(cc - b)) * s,
                cross_matrix(&(a - cc)) * s,
                cross_matrix(&(b - a)) * s,
            ];
            visit(tri, &dn);
        }
    }
    Ok(())
}

/// `∂f_act/∂x · w`.
pub fn actuation_jacobian_mul(
    mesh: &TetMesh,
    x: &[Vec3],
    pressures: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; 3 * x.len()];
    for_each_block(mesh, x, pressures, |tri, dn| {
        let mut acc = Vec3::zeros();
        for (j, &node) in tri.iter().enumerate() {
            acc += dn[j] * Vec3::new(w[3 * node], w[3 * node + 1], w[3 * node + 2]);
        }
        for &k in tri {
            for d in 0..3 {
                out[3 * k + d] += acc[d];
            }
        }
    })?;
    Ok(out)
}

/// `(∂f_act/∂x)ᵀ · w`.
pub fn actuation_jacobian_transpose_mul(
    mesh: &TetMesh,
    x: &[Vec3],
    pressures: &[f64],
    w: &[f64],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; 3 * x.len()];
    for_each_block(mesh, x, pressures, |tri, dn| {
        let wsum = tri.iter().fold(Vec3::zeros(), |s, &k| {
            s + Vec3::new(w[3 * k], w[3 * k + 1], w[3 * k + 2])
        });
        for (j, &node) in tri.iter().enumerate() {
            let v = dn[j].transpose() * wsum;
            for d in 0..3 {
                out[3 * node + d] += v[d];
            }
        }
    })?;
    Ok(out)
}

/// Adds `scale · sym(∂f_act/∂x)` into `sink`. The load stiffness of a
/// closed chamber is already symmetric, so nothing is lost there.
pub fn add_actuation_jacobian<A: Assemble>(
    mesh: &TetMesh,
    x: &[Vec3],
    pressures: &[f64],
    scale: f64,
    sink: &mut A,
) -> Result<()> {
    for_each_block(mesh, x, pressures, |tri, dn| {
        for (k, &nk) in tri.iter().enumerate() {
            for (j, &nj) in tri.iter().enumerate() {
                // Block (k, j) is dn[j]; its mirror (j, k) contributes dn[k]ᵀ.
                let sym = (dn[j] + dn[k].transpose()) * (0.5 * scale);
                for r in 0..3 {
                    for s in 0..3 {
                        sink.add(3 * nk + r, 3 * nj + s, sym[(r, s)]);
                    }
                }
            }
        }
    })
}
