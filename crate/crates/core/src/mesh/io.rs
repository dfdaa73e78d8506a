//! Text mesh format.
//!
//! ```text
//! meshfmt 1
//! # comment
//! [metadata]
//! body_length 0.1
//! [nodes]
//! x y z
//! [tets]
//! a b c d
//! [labels]
//! BODY | SPINE        (one per tet)
//! [chambers]
//! chamber <id>
//! a b c               (triangles of the preceding chamber)
//! [fixed]
//! i j k ...           (any number of indices per line)
//! [markers]
//! tet w0 w1 w2 w3
//! ```
//!
//! Sections may appear in any order; `chambers`, `markers` and `labels` are
//! optional (missing labels mean all BODY). Coordinates are written with the
//! shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ChamberSurface, MarkerAttachment, Region, TetMesh, Vec3};
use crate::error::{Error, Result};

pub const MESH_FORMAT_VERSION: u32 = 1;

pub fn mesh_to_string(mesh: &TetMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "meshfmt {MESH_FORMAT_VERSION}");
    let _ = writeln!(
        s,
        "# {} nodes, {} tets, {} chambers, {} markers; SI units",
        mesh.nodes.len(),
        mesh.tets.len(),
        mesh.chambers.len(),
        mesh.markers.len()
    );
    s.push_str("[metadata]\n");
    let _ = writeln!(s, "body_length {}", mesh.body_length);
    s.push_str("[nodes]\n");
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s.push_str("[tets]\n");
    for t in &mesh.tets {
        let _ = writeln!(s, "{} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    s.push_str("[labels]\n");
    for r in &mesh.regions {
        let _ = writeln!(s, "{}", r.name());
    }
    s.push_str("[chambers]\n");
    for c in &mesh.chambers {
        let _ = writeln!(s, "chamber {}", c.id);
        for t in &c.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
    }
    s.push_str("[fixed]\n");
    for chunk in mesh.fixed_nodes.chunks(16) {
        let line: Vec<String> = chunk.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s.push_str("[markers]\n");
    for m in &mesh.markers {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            m.tet, m.weights[0], m.weights[1], m.weights[2], m.weights[3]
        );
    }
    s
}

pub fn save_mesh(mesh: &TetMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mesh_to_string(mesh)).map_err(|e| Error::io(path, e))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TetMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    mesh_from_str(&text, path)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Metadata,
    Nodes,
    Tets,
    Labels,
    Chambers,
    Fixed,
    Markers,
}

pub fn mesh_from_str(text: &str, origin: impl Into<PathBuf>) -> Result<TetMesh> {
    let origin = origin.into();
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.clone(),
        line,
        msg,
    };

    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    match lines.next() {
        Some((ln, header)) => {
            let mut parts = header.split_whitespace();
            if parts.next() != Some("meshfmt") {
                return Err(err(ln, "missing 'meshfmt' version header".into()));
            }
            let version: u32 = parts
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| err(ln, "unreadable format version".into()))?;
            if version != MESH_FORMAT_VERSION {
                return Err(err(ln, format!("unsupported format version {version}")));
            }
        }
        None => return Err(err(0, "empty mesh file".into())),
    }

    let mut section = Section::None;
    let mut body_length = None;
    let mut nodes = Vec::new();
    let mut tets: Vec<([usize; 4], usize)> = Vec::new();
    let mut labels: Vec<(Region, usize)> = Vec::new();
    let mut chambers: Vec<ChamberSurface> = Vec::new();
    let mut chamber_lines: Vec<Vec<usize>> = Vec::new();
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut markers: Vec<(MarkerAttachment, usize)> = Vec::new();
    let mut seen = Vec::new();

    for (ln, line) in lines {
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = match name.trim() {
                "metadata" => Section::Metadata,
                "nodes" => Section::Nodes,
                "tets" => Section::Tets,
                "labels" => Section::Labels,
                "chambers" => Section::Chambers,
                "fixed" => Section::Fixed,
                "markers" => Section::Markers,
                other => return Err(err(ln, format!("unknown section [{other}]"))),
            };
            if seen.contains(&(section as u8)) {
                return Err(err(ln, format!("duplicate section [{}]", name.trim())));
            }
            seen.push(section as u8);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::None => return Err(err(ln, "record outside of any section".into())),
            Section::Metadata => {
                if fields.len() != 2 {
                    return Err(err(ln, "metadata records are 'key value'".into()));
                }
                match fields[0] {
                    "body_length" => {
                        body_length = Some(parse_f64(fields[1]).map_err(|m| err(ln, m))?);
                    }
                    // Unknown metadata keys are carried by other tools; ignore.
                    _ => {}
                }
            }
            Section::Nodes => {
                let v = parse_floats::<3>(&fields)
                    .map_err(|m| err(ln, format!("node record {}: {m}", nodes.len())))?;
                nodes.push(Vec3::new(v[0], v[1], v[2]));
            }
            Section::Tets => {
                let v = parse_indices::<4>(&fields)
                    .map_err(|m| err(ln, format!("tet record {}: {m}", tets.len())))?;
                tets.push((v, ln));
            }
            Section::Labels => {
                if fields.len() != 1 {
                    return Err(err(
                        ln,
                        format!("label record {}: expected one label", labels.len()),
                    ));
                }
                let r = match fields[0] {
                    "BODY" | "0" => Region::Body,
                    "SPINE" | "1" => Region::Spine,
                    other => {
                        return Err(err(
                            ln,
                            format!("label record {}: unknown region '{other}'", labels.len()),
                        ))
                    }
                };
                labels.push((r, ln));
            }
            Section::Chambers => {
                if fields[0] == "chamber" {
                    if fields.len() != 2 {
                        return Err(err(ln, "expected 'chamber <id>'".into()));
                    }
                    let id: usize = fields[1]
                        .parse()
                        .map_err(|_| err(ln, format!("bad chamber id '{}'", fields[1])))?;
                    if chambers.iter().any(|c| c.id == id) {
                        return Err(err(ln, format!("duplicate chamber id {id}")));
                    }
                    chambers.push(ChamberSurface {
                        id,
                        triangles: Vec::new(),
                    });
                    chamber_lines.push(Vec::new());
                } else {
                    let Some(current) = chambers.last_mut() else {
                        return Err(err(ln, "triangle before any 'chamber <id>' line".into()));
                    };
                    let v = parse_indices::<3>(&fields).map_err(|m| {
                        err(
                            ln,
                            format!(
                                "chamber {} triangle {}: {m}",
                                current.id,
                                current.triangles.len()
                            ),
                        )
                    })?;
                    current.triangles.push(v);
                    chamber_lines.last_mut().unwrap().push(ln);
                }
            }
            Section::Fixed => {
                for f in fields {
                    let i: usize = f
                        .parse()
                        .map_err(|_| err(ln, format!("bad fixed node index '{f}'")))?;
                    fixed.push((i, ln));
                }
            }
            Section::Markers => {
                if fields.len() != 5 {
                    return Err(err(
                        ln,
                        format!(
                            "marker record {}: expected 'tet w0 w1 w2 w3'",
                            markers.len()
                        ),
                    ));
                }
                let tet: usize = fields[0].parse().map_err(|_| {
                    err(
                        ln,
                        format!("marker record {}: bad tet index", markers.len()),
                    )
                })?;
                let w = parse_floats::<4>(&fields[1..])
                    .map_err(|m| err(ln, format!("marker record {}: {m}", markers.len())))?;
                markers.push((MarkerAttachment { tet, weights: w }, ln));
            }
        }
    }

    let n = nodes.len();
    for (i, (t, ln)) in tets.iter().enumerate() {
        if let Some(&bad) = t.iter().find(|&&v| v >= n) {
            return Err(err(
                *ln,
                format!("tet record {i}: node index {bad} out of range ({n} nodes)"),
            ));
        }
    }
    for (c, lns) in chambers.iter().zip(&chamber_lines) {
        for (k, (t, ln)) in c.triangles.iter().zip(lns).enumerate() {
            if let Some(&bad) = t.iter().find(|&&v| v >= n) {
                return Err(err(
                    *ln,
                    format!(
                        "chamber {} triangle {k}: node index {bad} out of range ({n} nodes)",
                        c.id
                    ),
                ));
            }
        }
    }
    for (i, ln) in &fixed {
        if *i >= n {
            return Err(err(*ln, format!("fixed node {i} out of range ({n} nodes)")));
        }
    }
    for (k, (m, ln)) in markers.iter().enumerate() {
        if m.tet >= tets.len() {
            return Err(err(
                *ln,
                format!("marker record {k}: tet {} out of range", m.tet),
            ));
        }
    }
    let regions = if labels.is_empty() {
        vec![Region::Body; tets.len()]
    } else if labels.len() != tets.len() {
        let ln = labels.last().map(|l| l.1).unwrap_or(0);
        return Err(err(
            ln,
            format!("{} labels for {} tets", labels.len(), tets.len()),
        ));
    } else {
        labels.into_iter().map(|l| l.0).collect()
    };
    let mut fixed_nodes: Vec<usize> = fixed.into_iter().map(|f| f.0).collect();
    fixed_nodes.sort_unstable();
    fixed_nodes.dedup();

    let body_length = match body_length {
        Some(l) => l,
        None => {
            let (lo, hi) = bbox(&nodes);
            hi.x - lo.x
        }
    };

    Ok(TetMesh {
        nodes,
        tets: tets.into_iter().map(|t| t.0).collect(),
        regions,
        chambers,
        fixed_nodes,
        markers: markers.into_iter().map(|m| m.0).collect(),
        body_length,
    })
}

fn bbox(nodes: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in nodes {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("bad number '{s}'"))
}

fn parse_floats<const N: usize>(fields: &[&str]) -> std::result::Result<[f64; N], String> {
    if fields.len() != N {
        return Err(format!("expected {N} numbers, found {}", fields.len()));
    }
    let mut out = [0.0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = parse_f64(f)?;
    }
    Ok(out)
}

fn parse_indices<const N: usize>(fields: &[&str]) -> std::result::Result<[usize; N], String> {
    if fields.len() != N {
        return Err(format!("expected {N} indices, found {}", fields.len()));
    }
    let mut out = [0; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f.parse().map_err(|_| format!("bad index '{f}'"))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_composite_beam, BeamSpec, CellBox};

    fn sample() -> TetMesh {
        let mut spec = BeamSpec::uniform([0.1, 0.03, 0.03], [4, 3, 3]);
        spec.spine_half_thickness = 0.002;
        spec.chamber_blocks.push(CellBox::new([1, 1, 1], [3, 2, 2]));
        generate_composite_beam(&spec)
            .unwrap()
            .with_markers(&[
                Vec3::new(0.1, 0.015, 0.03),
                Vec3::new(0.0537, 0.005, 0.0123),
            ])
            .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mesh = sample();
        let text = mesh_to_string(&mesh);
        let back = mesh_from_str(&text, "mem").unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn missing_chamber_section_is_empty() {
        let text = mesh_to_string(&sample());
        let start = text.find("[chambers]").unwrap();
        let end = text.find("[fixed]").unwrap();
        let stripped = format!("{}{}", &text[..start], &text[end..]);
        let mesh = mesh_from_str(&stripped, "mem").unwrap();
        assert!(mesh.chambers.is_empty());
    }

    #[test]
    fn out_of_range_tet_names_record() {
        let text = "meshfmt 1\n[nodes]\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n[tets]\n0 1 2 3\n0 1 2 9\n";
        let msg = mesh_from_str(text, "bad.mesh").unwrap_err().to_string();
        assert!(msg.contains("tet record 1"), "{msg}");
        assert!(msg.contains("bad.mesh:9"), "{msg}");
    }

    #[test]
    fn rejects_bad_header() {
        assert!(mesh_from_str("[nodes]\n", "x").is_err());
        assert!(mesh_from_str("meshfmt 7\n", "x").is_err());
    }
}
