use finsim::diff::{
    grad_dynamic, grad_quasistatic, loss_dynamic, loss_markers, loss_quasistatic, planar, MarkerDataset,
    Observation, Param, ParamSet, ParamVector, Planar, POISSON_MAX,
};
use finsim::elasticity::MaterialSet;
use finsim::integrator::{PressureSchedule, SimState, Simulator, SolverConfig};
use finsim::mesh::{generate_composite_beam, Side, TetMesh};
use finsim::presets::{composite_materials, marker_points, test_beam};
use proptest::prelude::*;

const L: f64 = 0.1;

fn beam() -> TetMesh {
    let spec = test_beam();
    generate_composite_beam(&spec)
        .unwrap()
        .with_markers(&marker_points(&spec))
        .unwrap()
}

fn plant() -> MaterialSet {
    composite_materials(0.15e6, 3.5e9)
}

fn tight() -> SolverConfig {
    SolverConfig {
        rel_tol: 1e-11,
        ..SolverConfig::default()
    }
}

fn left(mesh: &TetMesh, p: f64) -> Vec<f64> {
    mesh.chambers
        .iter()
        .map(|c| if mesh.chamber_side(c.id) == Some(Side::Left) { p } else { 0.0 })
        .collect()
}

/// Quasistatic markers at `materials`, shifted by a fixed pattern so the
/// loss is smooth at the query point.
fn static_dataset(mesh: &TetMesh, materials: &MaterialSet, pressures: &[f64]) -> MarkerDataset {
    let sim = Simulator::new(mesh, materials, &tight()).unwrap();
    let observations = pressures
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let pr = left(mesh, p);
            let sol = sim.quasistatic(&pr).unwrap();
            let markers = sol
                .markers
                .iter()
                .enumerate()
                .map(|(k, m)| Some([m.x + 1e-5 * (k as f64 - 1.0), m.y + 2e-5 * ((i + k) % 3) as f64 - 1e-5]))
                .collect();
            Observation {
                pressures: pr,
                markers,
                step: None,
            }
        })
        .collect();
    MarkerDataset {
        body_length: L,
        observations,
    }
}

fn central_difference(f: impl Fn(&[f64]) -> f64, z: &[f64], step: f64) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let mut a = z.to_vec();
            let mut b = z.to_vec();
            a[i] += step;
            b[i] -= step;
            (f(&a) - f(&b)) / (2.0 * step)
        })
        .collect()
}

fn assert_close(adjoint: &[f64], fd: &[f64], tol: f64) {
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(scale > 0.0, "finite differences vanish: {fd:?}");
    for (a, f) in adjoint.iter().zip(fd) {
        let err = (a - f).abs() / f.abs().max(1e-2 * scale);
        assert!(err < tol, "adjoint {adjoint:?} vs fd {fd:?} (relative error {err:e})");
    }
}

#[test]
fn identical_markers_give_zero_loss() {
    let s = vec![vec![[0.1, 0.2], [0.3, -0.1]]; 3];
    let o: Vec<Vec<Option<Planar>>> = s.iter().map(|v| v.iter().map(|p| Some(*p)).collect()).collect();
    assert_eq!(loss_markers(&s, &o, L).unwrap(), 0.0);
}

#[test]
fn uniform_offset_gives_distance_over_length() {
    let s = vec![vec![[0.1, 0.2], [0.3, -0.1], [0.0, 0.0]]; 2];
    let d = 0.0042;
    let (ox, oy) = (d * 0.6, -d * 0.8);
    let o: Vec<Vec<Option<Planar>>> = s.iter().map(|v| v.iter().map(|p| Some([p[0] + ox, p[1] + oy])).collect()).collect();
    approx::assert_relative_eq!(loss_markers(&s, &o, L).unwrap(), d / L, max_relative = 1e-12);
}

#[test]
fn single_offset_pair_is_averaged_over_all_markers() {
    let s = vec![vec![[0.01, 0.02], [0.05, 0.0], [0.1, 0.01]]; 4];
    let mut o: Vec<Vec<Option<Planar>>> = s.iter().map(|v| v.iter().map(|p| Some(*p)).collect()).collect();
    o[2][1] = Some([0.05 + 0.003, 0.0 + 0.004]);
    let m = 12.0;
    approx::assert_relative_eq!(loss_markers(&s, &o, L).unwrap(), 0.005 / (0.1 * m), max_relative = 1e-12);
}

#[test]
fn untracked_markers_are_skipped() {
    let s = vec![vec![[0.0, 0.0], [1.0, 1.0]]];
    let o = vec![vec![Some([0.0, 0.003]), None]];
    approx::assert_relative_eq!(loss_markers(&s, &o, L).unwrap(), 0.003 / L, max_relative = 1e-12);
    assert_eq!(loss_markers(&s, &[vec![None, None]], L).unwrap(), 0.0);
}

#[test]
fn mismatched_shapes_are_rejected() {
    let s = vec![vec![[0.0, 0.0], [1.0, 1.0]]];
    assert!(loss_markers(&s, &[vec![Some([0.0, 0.0])]], L).is_err());
    assert!(loss_markers(&s, &[], L).is_err());
}

#[test]
fn dataset_text_round_trips() {
    let d = MarkerDataset {
        body_length: 0.12,
        observations: vec![
            Observation {
                pressures: vec![2000.0, 0.0],
                markers: vec![Some([0.048, 0.0150000001]), None],
                step: Some(3),
            },
            Observation {
                pressures: vec![1e-3, 1.0 / 3.0],
                markers: vec![Some([-1e-17, 0.1]), Some([0.12, 0.015])],
                step: Some(7),
            },
        ],
    };
    let back = MarkerDataset::parse(&d.to_text(), "mem".as_ref()).unwrap();
    assert_eq!(back, d);
}

#[test]
fn dataset_with_short_row_reports_line() {
    let text = "# body_length = 0.1\nobservation,step,chamber_0_pressure,marker_0_x,marker_0_y\n0,,100,0.1,0.2\n1,,100,0.1\n";
    let err = MarkerDataset::parse(text, "d.csv".as_ref()).unwrap_err().to_string();
    assert!(err.contains("d.csv:4"), "{err}");
}

#[test]
fn noiseless_data_is_a_stationary_point() {
    let mesh = beam();
    let sim = Simulator::new(&mesh, &plant(), &tight()).unwrap();
    let observations = [7e3, 2e4]
        .iter()
        .map(|&p| {
            let pr = left(&mesh, p);
            let sol = sim.quasistatic(&pr).unwrap();
            Observation {
                pressures: pr,
                markers: sol.markers.iter().map(|m| Some(planar(m))).collect(),
                step: None,
            }
        })
        .collect();
    let data = MarkerDataset {
        body_length: L,
        observations,
    };
    for set in [ParamSet::E2, ParamSet::E2Nu2] {
        let params = ParamVector::from_materials(set, &plant()).unwrap();
        let g = grad_quasistatic(&mesh, &plant(), &params, &data, &tight()).unwrap();
        assert!(g.loss < 1e-12, "{}", g.loss);
        assert!(g.gradient.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-6, "{:?}", g.gradient);
    }
}

#[test]
fn quasistatic_gradient_matches_finite_differences() {
    let mesh = beam();
    let data = static_dataset(&mesh, &plant(), &[1e4, 2e4]);
    let base = plant();
    let cfg = tight();
    for (set, values) in [
        (ParamSet::E2, vec![0.17e6, 3.1e9]),
        (ParamSet::E2Nu2, vec![0.13e6, 4.0e9, 0.47, 0.33]),
    ] {
        let params = ParamVector::new(set.params(), &values).unwrap();
        let g = grad_quasistatic(&mesh, &base, &params, &data, &cfg).unwrap();
        let loss = |z: &[f64]| {
            let p = ParamVector::from_transformed(set.params(), z).unwrap();
            loss_quasistatic(&mesh, &base, &p, &data, &cfg).unwrap()
        };
        approx::assert_relative_eq!(g.loss, loss(&params.transformed()), max_relative = 1e-12);
        let fd = central_difference(loss, &params.transformed(), 1e-4);
        assert_close(&g.gradient, &fd, 1e-3);
    }
}

#[test]
fn open_chamber_gradient_matches_finite_differences() {
    let mut mesh = beam();
    // Drop one face so the load stiffness is no longer symmetric.
    let c = mesh.chambers.iter_mut().find(|c| c.triangles.len() > 4).unwrap();
    c.triangles.remove(c.triangles.len() / 2);
    assert!(!finsim::integrator::is_closed(c));
    let data = static_dataset(&mesh, &plant(), &[2e4]);
    let base = plant();
    let cfg = tight();
    let params = ParamVector::new(ParamSet::E2.params(), &[0.17e6, 3.1e9]).unwrap();
    let g = grad_quasistatic(&mesh, &base, &params, &data, &cfg).unwrap();
    let loss = |z: &[f64]| {
        let p = ParamVector::from_transformed(ParamSet::E2.params(), z).unwrap();
        loss_quasistatic(&mesh, &base, &p, &data, &cfg).unwrap()
    };
    let fd = central_difference(loss, &params.transformed(), 1e-4);
    assert_close(&g.gradient, &fd, 1e-3);
}

#[test]
fn log_gradient_is_scaled_natural_gradient() {
    let mesh = beam();
    let data = static_dataset(&mesh, &plant(), &[2e4]);
    let params = ParamVector::new(ParamSet::E2.params(), &[0.2e6, 3.0e9]).unwrap();
    let g = grad_quasistatic(&mesh, &plant(), &params, &data, &tight()).unwrap();
    for i in 0..2 {
        let e = params.values()[i];
        approx::assert_relative_eq!(g.gradient[i], std::f64::consts::LN_10 * e * g.natural_gradient[i], max_relative = 1e-14);
    }
    // The natural gradient on its own, by differences in E.
    let h = 1e-4 * params.values()[0];
    let at = |e: f64| {
        let p = ParamVector::new(ParamSet::E2.params(), &[e, 3.0e9]).unwrap();
        loss_quasistatic(&mesh, &plant(), &p, &data, &tight()).unwrap()
    };
    let fd = (at(0.2e6 + h) - at(0.2e6 - h)) / (2.0 * h);
    approx::assert_relative_eq!(g.natural_gradient[0], fd, max_relative = 1e-3);
}

fn dynamic_dataset(mesh: &TetMesh, schedule: &PressureSchedule, steps: &[usize]) -> MarkerDataset {
    let sim = Simulator::new(mesh, &plant(), &tight()).unwrap();
    let n = *steps.iter().max().unwrap();
    let traj = sim.rollout(&SimState::rest(mesh), schedule, n).unwrap();
    let observations = steps
        .iter()
        .map(|&s| Observation {
            pressures: traj.pressures[s].clone(),
            markers: traj.markers[s]
                .iter()
                .enumerate()
                .map(|(k, m)| Some([m.x - 2e-6 * k as f64, m.y + 3e-6 * (s % 4) as f64 - 4e-6]))
                .collect(),
            step: Some(s),
        })
        .collect();
    MarkerDataset {
        body_length: L,
        observations,
    }
}

#[test]
fn dynamic_gradient_matches_finite_differences() {
    let mesh = beam();
    let schedule = PressureSchedule::square_wave(&mesh, 2e4, 10.0).unwrap();
    let cfg = SolverConfig {
        h: 0.005,
        ..tight()
    };
    let data = dynamic_dataset(&mesh, &schedule, &[2, 4, 6, 8, 10]);
    let base = plant();
    for (set, values) in [
        (ParamSet::E2, vec![0.17e6, 3.1e9]),
        (ParamSet::E2Nu2, vec![0.13e6, 4.0e9, 0.47, 0.33]),
    ] {
        let params = ParamVector::new(set.params(), &values).unwrap();
        let g = grad_dynamic(&mesh, &base, &params, &data, &schedule, &cfg).unwrap();
        let loss = |z: &[f64]| {
            let p = ParamVector::from_transformed(set.params(), z).unwrap();
            loss_dynamic(&mesh, &base, &p, &data, &schedule, &cfg).unwrap()
        };
        let fd = central_difference(loss, &params.transformed(), 1e-4);
        assert_close(&g.gradient, &fd, 1e-3);
    }
}

#[test]
fn zero_step_horizon_has_zero_gradient() {
    let mesh = beam();
    let schedule = PressureSchedule::constant(left(&mesh, 2e4));
    let rest = mesh.marker_positions(&mesh.nodes);
    let data = MarkerDataset {
        body_length: L,
        observations: vec![Observation {
            pressures: left(&mesh, 2e4),
            markers: rest.iter().map(|m| Some([m.x, m.y + 0.001])).collect(),
            step: Some(0),
        }],
    };
    let params = ParamVector::from_materials(ParamSet::E2Nu2, &plant()).unwrap();
    let g = grad_dynamic(&mesh, &plant(), &params, &data, &schedule, &tight()).unwrap();
    approx::assert_relative_eq!(g.loss, 0.001 / L, max_relative = 1e-9);
    assert!(g.gradient.iter().all(|v| *v == 0.0));
}

#[test]
fn loss_without_markers_has_exactly_zero_gradient() {
    let mesh = beam();
    let schedule = PressureSchedule::constant(left(&mesh, 2e4));
    let mut data = dynamic_dataset(&mesh, &schedule, &[3, 5]);
    for o in &mut data.observations {
        o.markers.iter_mut().for_each(|m| *m = None);
    }
    let params = ParamVector::new(ParamSet::E2.params(), &[0.2e6, 3e9]).unwrap();
    let g = grad_dynamic(&mesh, &plant(), &params, &data, &schedule, &SolverConfig::default()).unwrap();
    assert_eq!(g.loss, 0.0);
    assert!(g.gradient.iter().all(|v| *v == 0.0));
}

#[test]
fn dataset_kind_must_match_the_solver() {
    let mesh = beam();
    let schedule = PressureSchedule::constant(left(&mesh, 2e4));
    let params = ParamVector::from_materials(ParamSet::E2, &plant()).unwrap();
    let dynamic = dynamic_dataset(&mesh, &schedule, &[1]);
    assert!(grad_quasistatic(&mesh, &plant(), &params, &dynamic, &tight()).is_err());
    let stat = static_dataset(&mesh, &plant(), &[1e4]);
    assert!(grad_dynamic(&mesh, &plant(), &params, &stat, &schedule, &tight()).is_err());
}

fn param() -> impl Strategy<Value = Param> {
    prop::sample::select(Param::ALL.to_vec())
}

proptest! {
    #[test]
    fn transforms_round_trip(p in param(), u in 1e-6f64..(1.0 - 1e-6), e in 3.0f64..11.0) {
        let v = if p.is_poisson() { u * POISSON_MAX } else { 10f64.powf(e) };
        let back = p.untransform(p.transform(v));
        prop_assert!((back - v).abs() <= 1e-12 * v, "{v} -> {back}");
    }

    #[test]
    fn untransformed_values_are_in_bounds(p in param(), z in -300f64..300.0) {
        let z = if p.is_poisson() { 3.0 * z } else { z };
        prop_assert!(p.check(p.untransform(z)).is_ok(), "{} at {z}", p);
    }

    #[test]
    fn loss_is_nonnegative_and_zero_only_on_equality(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1e-3f64..1e-3, -1e-3f64..1e-3), 1..12),
    ) {
        let s = vec![pts.iter().map(|p| [p.0, p.1]).collect::<Vec<Planar>>()];
        let o = vec![pts.iter().map(|p| Some([p.0 + p.2, p.1 + p.3])).collect::<Vec<_>>()];
        let loss = loss_markers(&s, &o, L).unwrap();
        prop_assert!(loss >= 0.0);
        let equal = pts.iter().all(|p| p.0 + p.2 == p.0 && p.1 + p.3 == p.1);
        prop_assert_eq!(loss == 0.0, equal);
    }
}
