//! Built-in actuator designs and material presets.
//!
//! Body and spine moduli follow the nominal ranges of the three prototypes
//! (Dragon Skin 10 body for Nemo and Dory, Dragon Skin 20 for Bruce, acetal
//! spine for all); the defaults sit at the range midpoints.

use serde::{Deserialize, Serialize};

use crate::elasticity::{Material, MaterialSet, DEFAULT_BODY_DENSITY, DEFAULT_SPINE_DENSITY};
use crate::mesh::{BeamSpec, CellBox, Face, Vec3};

pub const SILICONE_POISSON: f64 = 0.49;
pub const ACETAL_POISSON: f64 = 0.37;

/// Pascals per bar.
pub const BAR: f64 = 1.0e5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Nemo,
    Dory,
    Bruce,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetInfo {
    /// Nominal body modulus range (Pa); a single value for Bruce.
    pub body_range: (f64, f64),
    pub spine_range: (f64, f64),
    pub chambers_per_side: usize,
    pub max_pressure: f64,
}

impl Preset {
    pub fn info(self) -> PresetInfo {
        let spine_range = (2.5e9, 5.0e9);
        match self {
            Preset::Nemo => PresetInfo {
                body_range: (0.1e6, 0.25e6),
                spine_range,
                chambers_per_side: 9,
                max_pressure: 0.2 * BAR,
            },
            Preset::Dory => PresetInfo {
                body_range: (0.1e6, 0.25e6),
                spine_range,
                chambers_per_side: 12,
                max_pressure: 0.35 * BAR,
            },
            Preset::Bruce => PresetInfo {
                body_range: (1.1e6, 1.1e6),
                spine_range,
                chambers_per_side: 9,
                max_pressure: 0.5 * BAR,
            },
        }
    }

    pub fn materials(self) -> MaterialSet {
        let info = self.info();
        composite_materials(
            0.5 * (info.body_range.0 + info.body_range.1),
            0.5 * (info.spine_range.0 + info.spine_range.1),
        )
    }

    pub fn beam(self) -> BeamSpec {
        fish_tail(self.info().chambers_per_side, FISH_MAX_DX)
    }
}

pub fn composite_materials(body_youngs: f64, spine_youngs: f64) -> MaterialSet {
    MaterialSet {
        body: Material {
            youngs_modulus: body_youngs,
            poisson_ratio: SILICONE_POISSON,
            density: DEFAULT_BODY_DENSITY,
        },
        spine: Material {
            youngs_modulus: spine_youngs,
            poisson_ratio: ACETAL_POISSON,
            density: DEFAULT_SPINE_DENSITY,
        },
    }
}

/// Lateral grid: 3 mm outer walls, 10.25 mm chambers, 1.5 mm of silicone
/// either side of a 0.5 mm spine.
const WIDTH: f64 = 0.03;
const Y_COORDS: [f64; 10] = [
    0.0, 0.003, 0.008125, 0.01325, 0.01475, 0.01525, 0.01675, 0.021875, 0.027, 0.03,
];
/// Vertical grid: 4 mm floor and roof around 12 mm chambers.
const HEIGHT: f64 = 0.02;
const Z_COORDS: [f64; 4] = [0.0, 0.004, 0.016, 0.02];
const SPINE_HALF_THICKNESS: f64 = 0.00025;
/// Fraction of the tail length covered by the spine, measured from the
/// clamped head.
pub const SPINE_FRACTION: f64 = 0.5;
pub const FISH_LENGTH: f64 = 0.12;
/// Longest cell along the preset tails: 1/50 of their length.
pub const FISH_MAX_DX: f64 = FISH_LENGTH / 50.0;
/// Coarser cells used by the identification twin.
pub const TWIN_MAX_DX: f64 = 0.004;

/// Coarser cross-section of the test beam: 4 mm walls, 9.5 mm chambers,
/// 1.25 mm of silicone either side of a 0.5 mm spine, 5 mm floor and roof.
const TEST_Y_COORDS: [f64; 8] = [0.0, 0.004, 0.0135, 0.01475, 0.01525, 0.0165, 0.026, 0.03];
const TEST_Z_COORDS: [f64; 4] = [0.0, 0.005, 0.015, 0.02];

/// Left and right chamber boxes over x-cells `[x_lo, x_hi)`, given the
/// y-cell ranges of the two cavities.
fn chamber_pair(x_lo: usize, x_hi: usize, left: [usize; 2], right: [usize; 2]) -> [CellBox; 2] {
    [
        CellBox::new([x_lo, left[0], 1], [x_hi, left[1], 2]),
        CellBox::new([x_lo, right[0], 1], [x_hi, right[1], 2]),
    ]
}

/// Small clamped beam (480 tets) with one long chamber per side and a
/// spine along its front half; the workhorse of the gradient tests.
pub fn test_beam() -> BeamSpec {
    let x_coords = vec![0.0, 0.02, 0.05, 0.08, 0.1];
    let blocks = chamber_pair(1, 3, [1, 2], [5, 6]).to_vec();
    BeamSpec {
        dimensions: [0.1, WIDTH, HEIGHT],
        resolution: [
            x_coords.len() - 1,
            TEST_Y_COORDS.len() - 1,
            TEST_Z_COORDS.len() - 1,
        ],
        spine_half_thickness: SPINE_HALF_THICKNESS,
        spine_length: Some(SPINE_FRACTION * 0.1),
        chamber_blocks: blocks,
        fixed_face: Face::XMin,
        x_coords: Some(x_coords),
        y_coords: Some(TEST_Y_COORDS.to_vec()),
        z_coords: Some(TEST_Z_COORDS.to_vec()),
    }
}

/// Fish tail with `chambers` chambers per side between a 10 mm head wall
/// and a 20 mm solid tail, 120 mm long overall. Cells along the tail are
/// no longer than `max_dx`.
pub fn fish_tail(chambers: usize, max_dx: f64) -> BeamSpec {
    let head = 0.01;
    let pitch = (FISH_LENGTH - 0.03) / chambers as f64;
    let cavity = 0.7 * pitch;
    let mut x_coords = vec![0.0];
    let push_span = |xs: &mut Vec<f64>, end: f64| {
        let start = *xs.last().unwrap();
        let n = ((end - start) / max_dx * (1.0 - 1e-9)).ceil().max(1.0) as usize;
        for k in 1..=n {
            xs.push(if k == n {
                end
            } else {
                start + (end - start) * k as f64 / n as f64
            });
        }
    };
    push_span(&mut x_coords, head);
    let mut blocks = Vec::new();
    for c in 0..chambers {
        let start = head + c as f64 * pitch;
        let lo = x_coords.len() - 1;
        push_span(&mut x_coords, start + cavity);
        blocks.extend(chamber_pair(lo, x_coords.len() - 1, [1, 3], [6, 8]));
        push_span(&mut x_coords, start + pitch);
    }
    push_span(&mut x_coords, FISH_LENGTH);
    BeamSpec {
        dimensions: [FISH_LENGTH, WIDTH, HEIGHT],
        resolution: [x_coords.len() - 1, Y_COORDS.len() - 1, Z_COORDS.len() - 1],
        spine_half_thickness: SPINE_HALF_THICKNESS,
        spine_length: Some(SPINE_FRACTION * FISH_LENGTH),
        chamber_blocks: blocks,
        fixed_face: Face::XMin,
        x_coords: Some(x_coords),
        y_coords: Some(Y_COORDS.to_vec()),
        z_coords: Some(Z_COORDS.to_vec()),
    }
}

/// Three markers on the top face along the spine line, the last one on the
/// tail tip.
pub fn marker_points(spec: &BeamSpec) -> Vec<Vec3> {
    let [lx, ly, lz] = spec.dimensions;
    [0.4, 0.7, 1.0]
        .iter()
        .map(|f| Vec3::new(f * lx, 0.5 * ly, lz))
        .collect()
}
