use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::TetMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub num_nodes: usize,
    pub num_tets: usize,
    pub min_volume: f64,
    pub max_volume: f64,
    pub inverted: Vec<usize>,
    /// Chamber ids with mixed winding or inward-facing normals.
    pub inconsistent_chambers: Vec<usize>,
    pub dangling_nodes: usize,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes            {}", self.num_nodes)?;
        writeln!(f, "tets             {}", self.num_tets)?;
        writeln!(f, "min tet volume   {:.6e}", self.min_volume)?;
        writeln!(f, "max tet volume   {:.6e}", self.max_volume)?;
        writeln!(f, "inverted         {}", self.inverted.len())?;
        writeln!(f, "bad chambers     {}", self.inconsistent_chambers.len())?;
        writeln!(f, "dangling nodes   {}", self.dangling_nodes)?;
        for msg in &self.failures {
            writeln!(f, "FAIL {msg}")?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

pub fn validate(mesh: &TetMesh) -> ValidationReport {
    let n = mesh.nodes.len();
    let mut failures = Vec::new();
    let mut referenced = vec![false; n];
    let mut min_volume = f64::INFINITY;
    let mut max_volume = f64::NEG_INFINITY;
    let mut inverted = Vec::new();

    for (t, tet) in mesh.tets.iter().enumerate() {
        if tet.iter().any(|&i| i >= n) {
            failures.push(format!("tet {t} references a node out of range"));
            continue;
        }
        for &i in tet {
            referenced[i] = true;
        }
        let vol = mesh.rest_volume(t);
        min_volume = min_volume.min(vol);
        max_volume = max_volume.max(vol);
        if !(vol > 0.0) {
            inverted.push(t);
        }
    }
    if !inverted.is_empty() {
        failures.push(format!(
            "{} inverted element(s), first tet {}",
            inverted.len(),
            inverted[0]
        ));
    }
    if mesh.regions.len() != mesh.tets.len() {
        failures.push(format!(
            "{} region labels for {} tets",
            mesh.regions.len(),
            mesh.tets.len()
        ));
    }

    let mut owner: HashMap<[usize; 3], usize> = HashMap::new();
    let mut inconsistent_chambers = Vec::new();
    for chamber in &mesh.chambers {
        let mut ok = true;
        // Directed edge counts; consistent winding uses each direction at most once.
        let mut edges: BTreeMap<(usize, usize), i32> = BTreeMap::new();
        for tri in &chamber.triangles {
            if tri.iter().any(|&i| i >= n) {
                failures.push(format!(
                    "chamber {} references a node out of range",
                    chamber.id
                ));
                ok = false;
                continue;
            }
            let mut key = *tri;
            key.sort_unstable();
            if let Some(&other) = owner.get(&key) {
                if other != chamber.id {
                    failures.push(format!(
                        "triangle {:?} shared by chambers {} and {}",
                        tri, other, chamber.id
                    ));
                }
            } else {
                owner.insert(key, chamber.id);
            }
            for e in 0..3 {
                *edges.entry((tri[e], tri[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        if !ok {
            continue;
        }
        let mixed = edges.values().any(|&c| c > 1);
        let closed = edges
            .keys()
            .all(|&(a, b)| edges.get(&(b, a)).copied().unwrap_or(0) == 1);
        let mut inward = false;
        if !mixed && closed {
            let enclosed: f64 = chamber
                .triangles
                .iter()
                .map(|t| {
                    let (a, b, c) = (&mesh.nodes[t[0]], &mesh.nodes[t[1]], &mesh.nodes[t[2]]);
                    a.dot(&b.cross(c)) / 6.0
                })
                .sum();
            // Normals point into the solid, i.e. out of the cavity.
            inward = enclosed < 0.0;
        }
        if mixed || inward {
            inconsistent_chambers.push(chamber.id);
            failures.push(format!(
                "chamber {} has {} triangle orientation",
                chamber.id,
                if mixed {
                    "inconsistent"
                } else {
                    "inward-facing"
                }
            ));
        }
    }

    if mesh.fixed_nodes.is_empty() {
        failures.push("no fixed nodes".to_string());
    }
    if let Some(&bad) = mesh.fixed_nodes.iter().find(|&&i| i >= n) {
        failures.push(format!("fixed node {bad} out of range"));
    }
    for (i, m) in mesh.markers.iter().enumerate() {
        let sum: f64 = m.weights.iter().sum();
        if m.tet >= mesh.tets.len()
            || m.weights.iter().any(|w| !(0.0..=1.0).contains(w))
            || (sum - 1.0).abs() > 1e-12
        {
            failures.push(format!("marker {i} has invalid attachment"));
        }
    }

    let dangling_nodes = referenced.iter().filter(|r| !**r).count();
    if dangling_nodes > 0 {
        failures.push(format!("{dangling_nodes} dangling node(s)"));
    }

    if mesh.tets.is_empty() {
        min_volume = 0.0;
        max_volume = 0.0;
    }

    ValidationReport {
        num_nodes: n,
        num_tets: mesh.tets.len(),
        min_volume,
        max_volume,
        inverted,
        inconsistent_chambers,
        dangling_nodes,
        failures,
    }
}
