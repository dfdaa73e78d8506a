use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use finsim::diff::{loss_quasistatic, ParamSet, ParamVector};
use finsim::harness::{
    gradcheck, ingest_trial, load_trial_dir, relative_error, sub_seed, Biquad, ChamberSide, Experiment,
    ExperimentConfig, GradcheckKind, GradcheckProblem, NotchConfig, Pressure, SyntheticPlant,
};
use finsim::hydrodynamics::{time_averaged_thrust, ThrustModel, ThrustTrial};
use finsim::identification::Method;
use finsim::integrator::{PressureSchedule, SolverConfig};
use finsim::mesh::{BeamSpec, CellBox, TetMesh};
use finsim::presets::{composite_materials, test_beam, Preset};
use finsim::Error;
use tempfile::TempDir;

fn beam_config() -> ExperimentConfig {
    let plant = composite_materials(0.15e6, 3.5e9);
    let mut c = ExperimentConfig::default();
    c.mesh.beam = Some(test_beam());
    c.material.body = Some(plant.body);
    c.material.spine = Some(plant.spine);
    c
}

fn experiment(config: ExperimentConfig, dir: &TempDir) -> Experiment {
    let mut ex = Experiment::new(config, dir.path().to_path_buf());
    ex.out = dir.path().join("out");
    ex
}

fn beam() -> TetMesh {
    beam_config().build_mesh(Path::new(".")).unwrap()
}

fn plant(marker_noise: f64, force_noise: f64, seed: u64) -> SyntheticPlant {
    let c = beam_config();
    let mut p = c.plant.clone();
    p.marker_noise = marker_noise;
    p.force_noise = force_noise;
    SyntheticPlant::new(c.materials().unwrap(), p, seed).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn pressure_units() {
    let p = |s: &str| s.parse::<Pressure>().unwrap().0;
    assert_eq!(p("200 mbar"), 20_000.0);
    assert_eq!(p("0.35bar"), 35_000.0);
    assert_eq!(p("20 kPa"), 20_000.0);
    assert_eq!(p("1500"), 1500.0);
    assert_eq!(p("2.5e3 Pa"), 2500.0);
    assert_eq!(p("1E2mbar"), 10_000.0);
    for bad in ["5 psi", "-1 bar", "bar", "", "1.0.0 Pa"] {
        assert!(bad.parse::<Pressure>().is_err(), "{bad}");
    }
}

#[test]
fn config_accepts_numbers_and_suffixed_strings() {
    let c = ExperimentConfig::from_toml(
        r#"
seed = 7
[actuation]
amplitude = "300 mbar"
frequency = 2.0
[quasistatic]
pressures = [1000, 2500.5, "0.1 bar"]
[thrust]
amplitudes = ["200 mbar", 30000]
"#,
    )
    .unwrap();
    assert_eq!(c.amplitude(), 30_000.0);
    assert_eq!(c.static_pressures(), vec![1000.0, 2500.5, 10_000.0]);
    assert_eq!(c.thrust.amplitudes, vec![Pressure(20_000.0), Pressure(30_000.0)]);
    assert_eq!(c.seed, 7);
}

#[test]
fn config_round_trip_is_a_fixed_point() {
    let mut full = beam_config();
    full.seed = 42;
    full.out = Some(PathBuf::from("runs/a"));
    full.mesh.markers = Some(vec![[0.05, 0.015, 0.02], [0.1, 0.015, 0.02]]);
    full.actuation.amplitude = Some(Pressure(12_345.678));
    full.solver.gravity = Some([0.0, 0.0, -9.81]);
    full.quasistatic.pressures = vec![Pressure(1.0 / 3.0), Pressure(2e4)];
    full.quasistatic.side = ChamberSide::Both;
    full.thrust.notch = Some(NotchConfig { frequency: 7.5, q: 3.0 });
    full.thrust.split = "by_frequency:4".parse().unwrap();
    full.identify.method = Method::Grid;
    full.identify.params = ParamSet::E2Nu2;
    full.identify.start = Some(vec![0.2e6, 3e9, 0.45, 0.3]);
    full.gradcheck.kind = GradcheckKind::Dynamic;
    full.gradcheck.at = Some(vec![0.1e6, 4e9]);
    full.data.trials = Some(PathBuf::from("trials"));
    for c in [ExperimentConfig::default(), full] {
        let text = c.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
    }
}

#[test]
fn config_rejects_unknown_keys_and_conflicts() {
    let err = ExperimentConfig::from_toml("[solver]\nhh = 0.01\n").unwrap_err();
    assert!(err.to_string().contains("hh"), "{err}");
    let err = ExperimentConfig::from_toml("sead = 1\n").unwrap_err();
    assert!(err.to_string().contains("sead"), "{err}");
    let err = ExperimentConfig::from_toml("[mesh]\npreset = \"nemo\"\npath = \"a.txt\"\n").unwrap_err();
    assert!(err.to_string().contains("at most one"), "{err}");
    assert!(ExperimentConfig::from_toml("[plant]\nmarker_noise = -1e-3\n").is_err());
    assert!(ExperimentConfig::from_toml("[actuation]\namplitude = \"2 psi\"\n").is_err());
}

#[test]
fn presets_carry_the_prototype_table() {
    let cfg = |p: &str| ExperimentConfig::from_toml(&format!("[material]\npreset = \"{p}\"\n")).unwrap();
    for (name, body, chambers, p_max) in [
        ("nemo", 0.175e6, 9, 0.2e5),
        ("dory", 0.175e6, 12, 0.35e5),
        ("bruce", 1.1e6, 9, 0.5e5),
    ] {
        let c = cfg(name);
        let m = c.materials().unwrap();
        assert!((m.body.youngs_modulus - body).abs() < 1e-6 * body, "{name}");
        assert!((m.spine.youngs_modulus - 3.75e9).abs() < 1.0, "{name}");
        assert_eq!(m.body.poisson_ratio, 0.49);
        assert_eq!(m.spine.poisson_ratio, 0.37);
        assert!((c.amplitude() - p_max).abs() < 1e-9, "{name}");
        let spec = c.beam_spec().unwrap();
        assert_eq!(spec.chamber_blocks.len(), 2 * chambers, "{name}");
    }
    assert_eq!(Preset::Dory.info().chambers_per_side, 12);
}

#[test]
fn sub_seeds_are_distinct_and_stable() {
    let a: Vec<u64> = (0..16).map(|s| sub_seed(3, s)).collect();
    let mut b = a.clone();
    b.sort();
    b.dedup();
    assert_eq!(b.len(), 16);
    assert_eq!(sub_seed(3, 5), a[5]);
    assert_ne!(sub_seed(4, 5), a[5]);
}

#[test]
fn mesh_gen_on_default_tail_passes_validation() {
    let dir = TempDir::new().unwrap();
    let out = experiment(ExperimentConfig::default(), &dir).mesh_gen(false).unwrap();
    assert!(out.lines.iter().any(|l| l.ends_with("PASS")), "{:?}", out.lines);
    let mesh = finsim::mesh::load_mesh(dir.path().join("out/mesh.txt")).unwrap();
    assert_eq!(mesh.chambers.len(), 18);
    assert_eq!(mesh.markers.len(), 3);
    assert!(read(&dir.path().join("out/validation.txt")).contains("PASS"));
}

#[test]
fn mesh_gen_names_overlapping_blocks() {
    let dir = TempDir::new().unwrap();
    let mut c = beam_config();
    let spec = c.mesh.beam.as_mut().unwrap();
    spec.chamber_blocks.push(CellBox::new([1, 1, 1], [2, 2, 2]));
    let err = experiment(c, &dir).mesh_gen(false).unwrap_err();
    assert!(err.to_string().contains("chamber blocks 0 and 2"), "{err}");
}

#[test]
fn edge_check_warns_on_coarse_grids() {
    let dir = TempDir::new().unwrap();
    let out = experiment(beam_config(), &dir).mesh_gen(true).unwrap();
    let warning = out.lines.iter().find(|l| l.starts_with("warning:")).expect("warning");
    assert!(warning.contains("1/50"), "{warning}");
    let mut fine = beam_config();
    fine.mesh.beam = Some(BeamSpec::uniform([0.05, 0.002, 0.002], [50, 2, 2]));
    let out = experiment(fine, &dir).mesh_gen(true).unwrap();
    assert!(!out.lines.iter().any(|l| l.starts_with("warning:")), "{:?}", out.lines);
}

#[test]
fn noiseless_static_data_fits_the_plant_exactly() {
    let mesh = beam();
    let p = plant(0.0, 0.0, 1);
    let solver = SolverConfig {
        rel_tol: 1e-10,
        ..SolverConfig::default()
    };
    let data = p.synth_quasistatic(&mesh, &[5e3, 1e4, 2e4], ChamberSide::Left, &solver).unwrap();
    assert_eq!(data.observations.len(), 3);
    let truth = ParamVector::from_materials(ParamSet::E2, &p.materials).unwrap();
    let loss = loss_quasistatic(&mesh, &p.materials, &truth, &data, &solver).unwrap();
    assert!(loss < 1e-8, "{loss}");
}

#[test]
fn static_tip_deflection_grows_with_pressure() {
    let mesh = beam();
    let pressures: Vec<f64> = (0..5).map(|k| 2e4 * k as f64 / 4.0).collect();
    let data = plant(0.0, 0.0, 1)
        .synth_quasistatic(&mesh, &pressures, ChamberSide::Left, &SolverConfig::default())
        .unwrap();
    let y0 = data.observations[0].markers[2].unwrap()[1];
    let tip: Vec<f64> = data.observations.iter().map(|o| (o.markers[2].unwrap()[1] - y0).abs()).collect();
    assert_eq!(tip[0], 0.0);
    assert!(tip.windows(2).all(|w| w[1] > w[0]), "{tip:?}");
}

#[test]
fn synthetic_data_depends_only_on_the_seed() {
    let run = |seed: u64| {
        let dir = TempDir::new().unwrap();
        let mut c = beam_config();
        c.seed = seed;
        experiment(c, &dir).synth_quasistatic().unwrap();
        read(&dir.path().join("out/markers.csv"))
    };
    let a = run(5);
    assert_eq!(a, run(5));
    assert_ne!(a, run(6));
}

#[test]
fn thrust_matrix_writes_one_file_per_trial() {
    let dir = TempDir::new().unwrap();
    let mut c = beam_config();
    c.thrust.duration = 0.1;
    let out = experiment(c, &dir).synth_thrust().unwrap();
    let trials = load_trial_dir(&dir.path().join("out/trials"), None).unwrap();
    assert_eq!(trials.len(), 40);
    assert_eq!(out.lines, vec!["40 trials".to_string()]);
    for (a, f) in [(20_000.0, 1.0), (30_000.0, 4.0)] {
        assert_eq!(trials.iter().filter(|t| t.amplitude == a && t.frequency == f).count(), 5);
    }
    assert!(trials.iter().any(|t| t.id == "a30000_f3_t4"));
    assert!(trials.iter().all(|t| t.len() == 11 && t.sample_period == 0.01));
}

#[test]
fn zero_amplitude_force_is_pure_noise() {
    let sigma = 1e-4;
    let trials = plant(5e-4, sigma, 9)
        .synth_thrust(&beam(), &[0.0], &[2.0], 1, 2.0, &SolverConfig::default())
        .unwrap();
    let f = &trials[0].force;
    let n = f.len() as f64;
    let mean = f.iter().sum::<f64>() / n;
    assert!(mean.abs() < 3.0 * sigma / n.sqrt(), "{mean}");
    let sd = (f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((sd / sigma - 1.0).abs() < 0.15, "{sd}");
    assert!(trials[0].p_left.iter().all(|p| *p == 0.0));
}

#[test]
fn faster_flapping_gives_more_ebt_thrust() {
    let p = plant(0.0, 0.0, 0);
    let trials = p
        .synth_thrust(&beam(), &[2e4], &[1.0, 4.0], 1, 1.0, &SolverConfig::default())
        .unwrap();
    let m = p.config.ebt.virtual_mass();
    let mean_ebt = |t: &ThrustTrial| {
        let v: Vec<f64> = (1..t.len()).map(|i| t.tip_lateral_velocity(i)).collect();
        time_averaged_thrust(&v, m).unwrap()
    };
    let (slow, fast) = (mean_ebt(&trials[0]), mean_ebt(&trials[1]));
    assert!(fast > slow, "{slow} vs {fast}");
}

#[test]
fn thrust_pressure_channels_follow_the_valve() {
    let mut p = plant(0.0, 0.0, 0);
    p.config.valve_time_constant = 0.05;
    let mesh = beam();
    let trials = p.synth_thrust(&mesh, &[2e4], &[2.0], 1, 0.5, &SolverConfig::default()).unwrap();
    let t = &trials[0];
    let schedule = PressureSchedule::lagged_square_wave(&mesh, 2e4, 2.0, 0.05).unwrap();
    for i in 0..t.len() {
        let expected = schedule.pressures_at(t.t[i]);
        assert_eq!(t.p_left[i], expected[0]);
        assert_eq!(t.p_right[i], expected[1]);
    }
    assert_eq!(t.p_left[0], 0.0);
    assert!((t.p_left[20] / 2e4 - (1.0 - (-4.0f64).exp())).abs() < 1e-12);
}

fn synth_trials(dir: &Path, duration: f64) -> Vec<PathBuf> {
    let trials = plant(5e-4, 1e-5, 4)
        .synth_thrust(&beam(), &[2e4], &[1.0, 2.0], 2, duration, &SolverConfig::default())
        .unwrap();
    std::fs::create_dir_all(dir).unwrap();
    trials
        .iter()
        .map(|t| {
            let path = dir.join(format!("{}.csv", t.id));
            t.save(&path).unwrap();
            path
        })
        .collect()
}

#[test]
fn ingest_round_trips_synthetic_trials() {
    let dir = TempDir::new().unwrap();
    let paths = synth_trials(dir.path(), 0.2);
    let trials = load_trial_dir(dir.path(), None).unwrap();
    assert_eq!(trials.len(), paths.len());
    for (path, t) in paths.iter().zip(&trials) {
        assert_eq!(t.to_text(), read(path));
        assert_eq!(&ingest_trial(path, None).unwrap(), t);
    }
}

#[test]
fn ingest_reports_bad_files() {
    let dir = TempDir::new().unwrap();
    let paths = synth_trials(dir.path(), 0.2);
    let text = read(&paths[0]);
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header = lines.iter().position(|l| l.starts_with("t,")).unwrap();
    let row = header + 4;
    lines[row] = lines[row].rsplitn(2, ',').nth(1).unwrap().to_string();
    let short = dir.path().join("short.txt");
    std::fs::write(&short, lines.join("\n")).unwrap();
    let err = ingest_trial(&short, None).unwrap_err();
    assert!(matches!(err, Error::Parse { line, .. } if line == row + 1), "{err}");

    let mut jittered: Vec<String> = text.lines().map(String::from).collect();
    let (_, rest) = jittered[header + 6].split_once(',').unwrap();
    jittered[header + 6] = format!("0.0535,{rest}");
    let bad = dir.path().join("jitter.txt");
    std::fs::write(&bad, jittered.join("\n")).unwrap();
    let err = ingest_trial(&bad, None).unwrap_err();
    assert!(err.to_string().contains("non-uniform sampling"), "{err}");

    let empty = TempDir::new().unwrap();
    assert!(load_trial_dir(empty.path(), None).is_err());
}

#[test]
fn notch_removes_its_frequency_only() {
    let dt = 0.01;
    let n = 2000;
    let tone = |f: f64| -> Vec<f64> { (0..n).map(|i| (2.0 * PI * f * i as f64 * dt).sin()).collect() };
    let rms = |x: &[f64]| (x[500..1500].iter().map(|v| v * v).sum::<f64>() / 1000.0).sqrt();
    let notch = Biquad::notch(7.0, 2.0, dt).unwrap();
    let hit = notch.filtfilt(&tone(7.0));
    assert!(rms(&hit) < 1e-3, "{}", rms(&hit));
    let miss = notch.filtfilt(&tone(1.0));
    assert!((rms(&miss) / rms(&tone(1.0)) - 1.0).abs() < 0.02);
    let dc = notch.filtfilt(&vec![0.3; n]);
    assert!(dc.iter().all(|v| (v - 0.3).abs() < 1e-12));
    assert!(Biquad::notch(60.0, 2.0, dt).is_err());
}

#[test]
fn ingest_applies_the_notch_to_force_only() {
    let dir = TempDir::new().unwrap();
    let paths = synth_trials(dir.path(), 0.5);
    let raw = ingest_trial(&paths[0], None).unwrap();
    let notch = NotchConfig { frequency: 10.0, q: 4.0 };
    let filtered = ingest_trial(&paths[0], Some(&notch)).unwrap();
    assert_eq!(filtered.markers, raw.markers);
    assert_eq!(filtered.p_left, raw.p_left);
    assert_ne!(filtered.force, raw.force);
    let expected = Biquad::notch(10.0, 4.0, raw.sample_period).unwrap().filtfilt(&raw.force);
    assert_eq!(filtered.force, expected);
}

#[test]
fn relative_error_is_symmetric() {
    assert_eq!(relative_error(0.0, 0.0), 0.0);
    assert_eq!(relative_error(1.0, 0.0), 1.0);
    assert_eq!(relative_error(2.0, 1.0), relative_error(1.0, 2.0));
}

#[test]
fn gradcheck_quasistatic_agrees() {
    let dir = TempDir::new().unwrap();
    let ex = experiment(beam_config(), &dir);
    let report = ex.gradcheck_report().unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.max_rel_error() < 1e-3, "{}", report.to_table());
    let out = ex.gradcheck().unwrap();
    let table = read(&dir.path().join("out/gradcheck.csv"));
    assert!(table.starts_with("param,adjoint,fd_1e-3,rel_err_1e-3,fd_1e-4"), "{table}");
    assert_eq!(table.lines().count(), 3);
    assert!(out.lines.last().unwrap().starts_with("max relative error"));
}

#[test]
fn gradcheck_dynamic_agrees_with_v_shaped_errors() {
    let mut c = beam_config();
    c.gradcheck.kind = GradcheckKind::Dynamic;
    c.gradcheck.steps = 10;
    c.gradcheck.fd_steps = vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
    let dir = TempDir::new().unwrap();
    let report = experiment(c, &dir).gradcheck_report().unwrap();
    let err = report.error_by_step();
    assert!(report.max_rel_error() < 1e-3, "{err:?}");
    let best = err.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!(best > 0 && best < err.len() - 1, "{err:?}");
    assert!(err[0] > 10.0 * err[best] && err[err.len() - 1] > 10.0 * err[best], "{err:?}");
}

#[test]
fn gradcheck_function_matches_natural_units_at_query() {
    let mesh = beam();
    let p = plant(0.0, 0.0, 0);
    let solver = SolverConfig {
        rel_tol: 1e-11,
        ..SolverConfig::default()
    };
    let data = p.synth_quasistatic(&mesh, &[1e4, 2e4], ChamberSide::Right, &solver).unwrap();
    let at = ParamVector::new(ParamSet::E2.params(), &[0.2e6, 3e9]).unwrap();
    let r = gradcheck(&mesh, &p.materials, &at, GradcheckProblem::Quasistatic(&data), &[1e-4], &solver).unwrap();
    assert_eq!(r.at, vec![0.2e6, 3e9]);
    assert!(r.loss > 0.0);
    assert!(r.rows.iter().all(|row| row.rel_err[0] < 1e-3), "{}", r.to_table());
    assert!(gradcheck(&mesh, &p.materials, &at, GradcheckProblem::Quasistatic(&data), &[], &solver).is_err());
}

#[test]
fn identify_grid_writes_the_loss_field() {
    let dir = TempDir::new().unwrap();
    let mut c = beam_config();
    experiment(c.clone(), &dir).synth_quasistatic().unwrap();
    c.data.markers = Some(PathBuf::from("out/markers.csv"));
    c.identify.method = Method::Grid;
    let out_dir = TempDir::new().unwrap();
    let mut ex = Experiment::new(c, dir.path().to_path_buf());
    ex.out = out_dir.path().to_path_buf();
    let out = ex.identify().unwrap();
    let field = read(&out_dir.path().join("loss_field.csv"));
    assert_eq!(field.lines().count(), 26);
    assert!(field.starts_with("E_BODY,E_SPINE,loss\n"), "{field}");
    assert!(read(&out_dir.path().join("result.toml")).contains("method = \"grid\""));
    assert!(out.lines.iter().any(|l| l.starts_with("loss = ")));
    assert!(!out.written.iter().any(|p| p.ends_with("history_timing.csv")));
    assert!(out_dir.path().join("history_timing.csv").exists());
}

#[test]
fn identify_requires_a_dataset() {
    let dir = TempDir::new().unwrap();
    let err = experiment(beam_config(), &dir).identify().unwrap_err();
    assert!(err.to_string().contains("data.markers"), "{err}");
}

#[test]
fn thrust_train_and_eval_write_plot_tables() {
    let dir = TempDir::new().unwrap();
    synth_trials(&dir.path().join("trials"), 0.3);
    let mut c = beam_config();
    c.data.trials = Some(PathBuf::from("trials"));
    c.thrust.split = "by_frequency:2".parse().unwrap();
    c.thrust.train.epochs = 5;
    c.thrust.train.hidden = vec![8, 8];
    let ex = experiment(c.clone(), &dir);
    ex.thrust_train().unwrap();
    let metrics: serde_json::Value = serde_json::from_str(&read(&dir.path().join("out/metrics.json"))).unwrap();
    assert_eq!(metrics["train"]["trials"].as_array().unwrap().len(), 2);
    assert_eq!(metrics["validation"]["trials"].as_array().unwrap().len(), 2);
    assert!(metrics["validation"]["trials"]
        .as_array()
        .unwrap()
        .iter()
        .all(|t| t["frequency"] == 2.0));
    let model = ThrustModel::load(dir.path().join("out/model.json")).unwrap();
    assert_eq!(model.dims(), vec![14, 8, 8, 1]);

    c.data.model = Some(PathBuf::from("out/model.json"));
    let eval_dir = TempDir::new().unwrap();
    let mut ex = Experiment::new(c, dir.path().to_path_buf());
    ex.out = eval_dir.path().to_path_buf();
    ex.thrust_eval().unwrap();
    let tables = std::fs::read_dir(eval_dir.path().join("predictions")).unwrap().count();
    assert_eq!(tables, 4);
    for entry in std::fs::read_dir(eval_dir.path().join("predictions")).unwrap() {
        let text = read(&entry.unwrap().path());
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,f_measured,f_ebt,f_predicted"));
        for l in lines {
            let ebt: f64 = l.split(',').nth(2).unwrap().parse().unwrap();
            assert!(ebt >= 0.0, "{l}");
        }
    }
}

#[test]
fn commands_rerun_byte_identically() {
    let trials_dir = TempDir::new().unwrap();
    synth_trials(&trials_dir.path().join("trials"), 0.3);
    let run = || {
        let dir = TempDir::new().unwrap();
        let mut c = beam_config();
        c.seed = 11;
        c.thrust.duration = 0.05;
        c.thrust.amplitudes.truncate(1);
        c.thrust.frequencies.truncate(2);
        c.thrust.trials_per_cell = 2;
        c.thrust.train.epochs = 3;
        c.thrust.train.hidden = vec![6];
        c.thrust.split = "by_trial:0.5".parse().unwrap();
        c.data.trials = Some(trials_dir.path().join("trials"));
        c.identify.adam.max_iters = 2;
        c.actuation.duration = 0.05;
        let ex = experiment(c, &dir);
        let mut written = Vec::new();
        written.extend(ex.synth_quasistatic().unwrap().written);
        let mut c2 = ex.config.clone();
        c2.data.markers = Some(PathBuf::from("out/markers.csv"));
        let mut ex2 = Experiment::new(c2, dir.path().to_path_buf());
        ex2.out = dir.path().join("identify");
        written.extend(ex2.identify().unwrap().written);
        written.extend(ex.synth_thrust().unwrap().written);
        written.extend(ex.simulate().unwrap().written);
        written.extend(ex.quasistatic().unwrap().written);
        written.extend(ex.thrust_train().unwrap().written);
        written.extend(ex.mesh_gen(false).unwrap().written);
        let files: Vec<(String, String)> = written
            .iter()
            .map(|p| (p.strip_prefix(dir.path()).unwrap().display().to_string(), read(p)))
            .collect();
        (dir, files)
    };
    let (_a, first) = run();
    let (_b, second) = run();
    assert!(first.len() > 10);
    assert!(first.iter().any(|(n, _)| n.ends_with("model.json")));
    assert_eq!(first, second);
}

#[test]
fn simulate_writes_a_trajectory_per_step() {
    let dir = TempDir::new().unwrap();
    let mut c = beam_config();
    c.actuation.duration = 0.05;
    c.actuation.kind = finsim::harness::ActuationKind::Step;
    c.actuation.side = ChamberSide::Right;
    experiment(c, &dir).simulate().unwrap();
    let table = read(&dir.path().join("out/trajectory.csv"));
    assert_eq!(table.lines().count(), 1 + 6);
    assert!(table.lines().next().unwrap().starts_with("t,marker_0_x"));
    let last: Vec<f64> = table.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    // Right chamber pressurized, left idle.
    assert_eq!(&last[last.len() - 2..], &[0.0, 2e4]);
    let sidecar = read(&dir.path().join("out/simulate.log"));
    assert!(sidecar.contains("elapsed_s"));
}
