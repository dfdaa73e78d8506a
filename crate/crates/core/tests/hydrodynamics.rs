use finsim::hydrodynamics::*;
use finsim::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn virtual_mass_examples() {
    assert_eq!(virtual_mass(1000.0, 0.0), 0.0);
    assert!((virtual_mass(1000.0, 0.1) - 7.853982).abs() < 1e-6);
    assert!((virtual_mass(1000.0, 0.05) - 1.963495).abs() < 1e-6);
    for (rho, s) in [(1000.0, 0.02), (998.2, 0.013), (1.2, 0.5)] {
        let direct = std::f64::consts::FRAC_PI_4 * rho * s * s;
        assert!(rel(virtual_mass(rho, s), direct) < 1e-9);
    }
    assert!(EbtParams::new(0.0, 0.1).is_err());
    assert!(EbtParams::new(1000.0, -0.1).is_err());
}

#[test]
fn ebt_thrust_examples() {
    assert_eq!(ebt_thrust(0.0, 7.853982), 0.0);
    assert!((ebt_thrust(0.2, 7.853982) - 0.157080).abs() < 1e-6);
    assert!(rel(ebt_thrust(0.37, 2.5), 0.5 * 2.5 * 0.37 * 0.37) < 1e-9);
}

#[test]
fn time_average_examples() {
    let m = 3.0;
    assert!(rel(time_averaged_thrust(&[0.4; 17], m).unwrap(), ebt_thrust(0.4, m)) < 1e-15);
    assert_eq!(time_averaged_thrust(&[0.0; 9], m).unwrap(), 0.0);
    assert!(time_averaged_thrust(&[], m).is_err());
    // Three whole periods of A sin(ωt).
    let (a, n) = (0.3, 300);
    let v: Vec<f64> = (0..n)
        .map(|i| a * (2.0 * std::f64::consts::PI * 3.0 * i as f64 / n as f64).sin())
        .collect();
    let avg = time_averaged_thrust(&v, m).unwrap();
    assert!(rel(avg, 0.25 * m * a * a) < 0.01, "{avg}");
}

proptest! {
    #[test]
    fn ebt_thrust_is_even_and_nonnegative(v in -5.0f64..5.0, m in 0.0f64..10.0) {
        let f = ebt_thrust(v, m);
        prop_assert_eq!(f, ebt_thrust(-v, m));
        prop_assert!(f >= 0.0);
        if m > 0.0 {
            prop_assert_eq!(f == 0.0, v == 0.0);
        }
    }
}

fn cell() -> LoadCellParams {
    LoadCellParams { m: 0.5, b: 2.0, k: 200.0 }
}

#[test]
fn load_cell_zero_input_gives_zero() {
    let out = load_cell_response(&[0.0; 100], &cell(), 1e-3).unwrap();
    assert!(out.iter().all(|v| *v == 0.0));
}

#[test]
fn load_cell_has_unity_dc_gain() {
    // Settling time 1/(ζ ω_n) = 2m/b = 0.5 s; run 40 of them.
    let f = 2.5;
    let out = load_cell_response(&vec![f; 20001], &cell(), 1e-3).unwrap();
    let last = *out.last().unwrap();
    assert!((last - f).abs() < 1e-6 * f, "{last}");
}

/// `|(ibω + k) / (−mω² + ibω + k)|` with the complex arithmetic spelled out.
fn transfer_magnitude(p: &LoadCellParams, w: f64) -> f64 {
    let (nr, ni) = (p.k, p.b * w);
    let (dr, di) = (p.k - p.m * w * w, p.b * w);
    ((nr * nr + ni * ni) / (dr * dr + di * di)).sqrt()
}

#[test]
fn load_cell_sinusoid_gain_matches_transfer_function() {
    let p = cell();
    for w in [3.0, 12.0, 20.0, 35.0, 80.0] {
        let period = 2.0 * std::f64::consts::PI / w;
        let h = period / 100.0;
        // 8 s of settling, then 5 periods measured.
        let n = ((8.0 / period).ceil() as usize + 5) * 100;
        let f: Vec<f64> = (0..n).map(|i| (w * i as f64 * h).sin()).collect();
        let out = load_cell_response(&f, &p, h).unwrap();
        let tail = &out[n - 500..];
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let gain = 0.5 * (hi - lo);
        let exact = transfer_magnitude(&p, w);
        assert!(rel(gain, exact) < 0.01, "ω = {w}: {gain} vs {exact}");
        assert!(rel(p.gain(w), exact) < 1e-12);
    }
}

#[test]
fn load_cell_recoils_after_a_pulse() {
    let h = 1e-3;
    let f: Vec<f64> = (0..3000).map(|i| if i < 100 { 1.0 } else { 0.0 }).collect();
    let out = load_cell_response(&f, &cell(), h).unwrap();
    assert!(out[100..].iter().any(|v| *v < 0.0));
}

#[test]
fn load_cell_rejects_bad_input() {
    assert!(matches!(load_cell_response(&[0.0, f64::NAN], &cell(), 1e-3), Err(Error::NonFinite(_))));
    assert!(load_cell_response(&[0.0], &LoadCellParams { k: 0.0, ..cell() }, 1e-3).is_err());
    assert!(load_cell_response(&[0.0], &cell(), 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn load_cell_is_linear(
        f1 in prop::collection::vec(-3.0f64..3.0, 200),
        f2 in prop::collection::vec(-3.0f64..3.0, 200),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let p = cell();
        let h = 2e-3;
        let mixed: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| a * x + b * y).collect();
        let r = load_cell_response(&mixed, &p, h).unwrap();
        let r1 = load_cell_response(&f1, &p, h).unwrap();
        let r2 = load_cell_response(&f2, &p, h).unwrap();
        let scale = r.iter().chain(&r1).chain(&r2).fold(1e-300f64, |m, v| m.max(v.abs()));
        for i in 0..r.len() {
            prop_assert!((r[i] - (a * r1[i] + b * r2[i])).abs() <= 1e-10 * scale);
        }
    }
}

fn static_trial(n: usize) -> ThrustTrial {
    ThrustTrial {
        id: "static".into(),
        amplitude: 0.0,
        frequency: 1.0,
        sample_period: 0.01,
        t: (0..n).map(|i| i as f64 * 0.01).collect(),
        markers: vec![[[0.04, 0.015], [0.07, 0.015], [0.1, 0.015]]; n],
        p_left: vec![2.0e4; n],
        p_right: vec![5.0e3; n],
        force: vec![0.0; n],
    }
}

#[test]
fn static_trial_has_zero_rates() {
    let trial = static_trial(10);
    for i in 1..10 {
        let f = features_from_trial(&trial, i).unwrap();
        assert_eq!(f.len(), 14);
        assert!(f[6..12].iter().all(|v| *v == 0.0));
        assert_eq!(f[12], 1.5e4);
        assert_eq!(f[13], 0.0);
    }
    assert!(features_from_trial(&trial, 0).is_err());
    assert!(features_from_trial(&trial, 10).is_err());
}

#[test]
fn constant_velocity_is_recovered_exactly() {
    // Dyadic step and speeds keep every difference exact.
    let h = 0.25;
    let u = [[0.5, -1.0], [2.0, 0.25], [-0.75, 4.0]];
    let n = 8;
    let trial = ThrustTrial {
        sample_period: h,
        t: (0..n).map(|i| i as f64 * h).collect(),
        markers: (0..n)
            .map(|i| {
                let t = i as f64 * h;
                [
                    [1.0 + u[0][0] * t, 2.0 + u[0][1] * t],
                    [u[1][0] * t, 3.0 + u[1][1] * t],
                    [-2.0 + u[2][0] * t, u[2][1] * t],
                ]
            })
            .collect(),
        p_left: (0..n).map(|i| 100.0 * i as f64).collect(),
        ..static_trial(n)
    };
    for i in 1..n {
        let f = features_from_trial(&trial, i).unwrap();
        assert_eq!(&f[6..12], &[0.5, -1.0, 2.0, 0.25, -0.75, 4.0]);
        assert_eq!(f[13], 400.0);
    }
}

fn matrix_trials() -> Vec<ThrustTrial> {
    let mut out = Vec::new();
    for amp in [2.0e4, 3.0e4] {
        for freq in [1.0, 2.0, 3.0, 4.0] {
            for k in 0..5 {
                let mut t = static_trial(20);
                t.id = format!("a{amp}_f{freq}_{k}");
                t.amplitude = amp;
                t.frequency = freq;
                out.push(t);
            }
        }
    }
    out
}

#[test]
fn split_by_trial_gives_32_and_8() {
    let trials = matrix_trials();
    let (train, val) = build_thrust_dataset(&trials, &SplitSpec::ByTrial { fraction: 0.8 }, 3).unwrap();
    assert_eq!((train.len(), val.len()), (32, 8));
    let mut ids: Vec<&str> = train.iter().chain(&val).map(|t| t.id.as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 40);
    let again = build_thrust_dataset(&trials, &SplitSpec::ByTrial { fraction: 0.8 }, 3).unwrap();
    assert_eq!(again.1, val);
    let other = build_thrust_dataset(&trials, &SplitSpec::ByTrial { fraction: 0.8 }, 4).unwrap();
    assert_ne!(other.1, val);
}

#[test]
fn split_by_frequency_gives_30_and_10() {
    let trials = matrix_trials();
    let (train, val) = build_thrust_dataset(&trials, &SplitSpec::ByFrequency { holdout: vec![4.0] }, 0).unwrap();
    assert_eq!((train.len(), val.len()), (30, 10));
    assert!(val.iter().all(|t| t.frequency == 4.0));
    assert!(train.iter().all(|t| t.frequency != 4.0));
}

#[test]
fn split_errors() {
    let trials = matrix_trials();
    let err = build_thrust_dataset(&trials, &SplitSpec::ByFrequency { holdout: vec![5.0] }, 0).unwrap_err();
    assert!(err.to_string().contains('5'), "{err}");
    for fraction in [0.0, 1.0, -0.5, 1.5] {
        assert!(build_thrust_dataset(&trials, &SplitSpec::ByTrial { fraction }, 0).is_err());
    }
    assert!(build_thrust_dataset(&[], &SplitSpec::default(), 0).is_err());
}

#[test]
fn split_spec_parses() {
    assert_eq!("by_trial:0.8".parse::<SplitSpec>().unwrap(), SplitSpec::ByTrial { fraction: 0.8 });
    assert_eq!(
        "by_frequency:4,3".parse::<SplitSpec>().unwrap(),
        SplitSpec::ByFrequency { holdout: vec![4.0, 3.0] }
    );
    assert!("by_phase:1".parse::<SplitSpec>().is_err());
}

#[test]
fn trial_file_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut trial = static_trial(30);
    trial.id = "nemo_a20000_f2_t3".into();
    trial.amplitude = 2.0e4;
    trial.frequency = 2.0;
    trial.sample_period = 0.1 / 3.0;
    trial.t = (0..30).map(|i| i as f64 * trial.sample_period).collect();
    for m in &mut trial.markers {
        for p in m.iter_mut() {
            p[1] += rng.random_range(-1e-3..1e-3);
        }
    }
    trial.force = (0..30).map(|_| rng.random_range(-0.01..0.01)).collect();
    let back = ThrustTrial::parse(&trial.to_text(), "x.csv").unwrap();
    assert_eq!(back, trial);
}

#[test]
fn trial_short_row_reports_line() {
    let mut text = static_trial(5).to_text();
    text = text.replacen("0.02,", "", 1);
    // Header comments take four lines and the column header one more;
    // the edited row is the third sample.
    let err = ThrustTrial::parse(&text, "short.csv").unwrap_err();
    assert!(err.to_string().contains("short.csv:8"), "{err}");
}

#[test]
fn trial_non_uniform_sampling_is_rejected() {
    let mut trial = static_trial(6);
    trial.t[3] += 0.003;
    let text: String = trial.to_text().lines().filter(|l| !l.contains("sample_period")).collect::<Vec<_>>().join("\n");
    let err = ThrustTrial::parse(&text, "jitter.csv").unwrap_err();
    assert!(err.to_string().contains("non-uniform sampling"), "{err}");
    let mut backwards = static_trial(4);
    backwards.t[2] = backwards.t[1];
    assert!(ThrustTrial::parse(&backwards.to_text(), "b.csv").unwrap_err().to_string().contains("increase"));
}

#[test]
fn zero_model_predicts_zero() {
    let model = ThrustModel::zeros(&[14, 200, 300, 200, 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let x: Vec<f64> = (0..14).map(|_| rng.random_range(-10.0..10.0)).collect();
        assert_eq!(predict_thrust(&model, &x).unwrap(), 0.0);
    }
    assert!(matches!(predict_thrust(&model, &[0.0; 13]), Err(Error::Shape(_))));
}

#[test]
fn identity_path_routes_feature_zero() {
    // relu(x) − relu(−x) = x through two hidden units.
    let mut model = ThrustModel::zeros(&[3, 2, 1]).unwrap();
    model.layers[0].weights[(0, 0)] = 1.0;
    model.layers[0].weights[(1, 0)] = -1.0;
    model.layers[1].weights[(0, 0)] = 1.0;
    model.layers[1].weights[(0, 1)] = -1.0;
    model.input = Normalization {
        mean: vec![2.0, 0.0, 0.0],
        std: vec![4.0, 1.0, 1.0],
    };
    for x0 in [-6.0, 2.0, 3.0, 10.0] {
        let y = predict_thrust(&model, &[x0, 5.0, -1.0]).unwrap();
        assert_eq!(y, (x0 - 2.0) / 4.0);
        assert_eq!(y, predict_thrust(&model, &[x0, 5.0, -1.0]).unwrap());
    }
}

fn random_samples(n: usize, seed: u64, target: impl Fn(&[f64]) -> f64) -> ThrustSamples {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ThrustSamples::default();
    for i in 0..n {
        let x: Vec<f64> = (0..14).map(|_| rng.random_range(-1.0..1.0)).collect();
        s.targets.push(target(&x));
        s.features.push(x);
        s.trial.push(i);
    }
    s
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

#[test]
fn network_overfits_a_small_set() {
    let train = random_samples(50, 5, |x| (3.0 * x[0]).sin() + x[1] * x[2] - 0.5 * x[9].abs());
    let cfg = TrainConfig {
        epochs: 2000,
        seed: 1,
        ..TrainConfig::default()
    };
    let model = train_thrust_model(&train, &cfg).unwrap();
    let mse = model.mse(&train).unwrap();
    assert!(mse < 1e-4 * variance(&train.targets), "{mse}");
}

#[test]
fn network_learns_a_linear_target() {
    let f = |x: &[f64]| 3.0 * x[7];
    let train = random_samples(2000, 6, f);
    let val = random_samples(500, 7, f);
    let cfg = TrainConfig {
        epochs: 300,
        seed: 2,
        ..TrainConfig::default()
    };
    let model = train_thrust_model(&train, &cfg).unwrap();
    let pred = model.predict_batch(&val.features).unwrap();
    let r2 = r_squared(&pred, &val.targets);
    assert!(r2 > 0.999, "{r2}");
    // Epoch-to-epoch loss jitters by far more than 5% under Adam, so the
    // trend is checked on the best loss of each quarter of training.
    let log = &model.log.as_ref().unwrap().train_mse;
    let best: Vec<f64> = log.chunks(log.len() / 4).map(|q| q.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
    for w in best.windows(2) {
        assert!(w[1] <= 1.05 * w[0], "{best:?}");
    }
    assert!(best[3] < 0.01 * log[0], "{best:?}");
}

#[test]
fn normalization_comes_from_training_data_only() {
    let train = random_samples(80, 8, |x| x[0]);
    let mut val = random_samples(40, 9, |x| x[0]);
    for f in &mut val.features {
        f.iter_mut().for_each(|v| *v = 5.0 * *v + 7.0);
    }
    let cfg = TrainConfig {
        epochs: 3,
        hidden: vec![8],
        ..TrainConfig::default()
    };
    let model = train_thrust_model(&train, &cfg).unwrap();
    let stats = Normalization::fit(&train.features).unwrap();
    assert_eq!(model.input, stats);
    let val_stats = Normalization::fit(&val.features).unwrap();
    assert!(model.input.mean.iter().zip(&val_stats.mean).all(|(a, b)| (a - b).abs() > 1.0));
}

#[test]
fn constant_feature_gets_floored_scale() {
    let mut train = random_samples(30, 10, |x| x[1]);
    for f in &mut train.features {
        f[4] = 0.25;
    }
    let stats = Normalization::fit(&train.features).unwrap();
    assert_eq!(stats.std[4], STD_FLOOR);
    assert_eq!(stats.apply(&train.features[0])[4], 0.0);
}

#[test]
fn training_is_deterministic_and_model_file_round_trips() {
    let train = random_samples(100, 11, |x| x[3] * x[3] - x[5]);
    let cfg = TrainConfig {
        epochs: 5,
        seed: 4,
        ..TrainConfig::default()
    };
    let a = train_thrust_model(&train, &cfg).unwrap();
    let b = train_thrust_model(&train, &cfg).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    a.save(&path).unwrap();
    let back = ThrustModel::load(&path).unwrap();
    assert_eq!(back, a);
    let probe = random_samples(50, 12, |_| 0.0);
    let pa = a.predict_batch(&probe.features).unwrap();
    let pb = back.predict_batch(&probe.features).unwrap();
    assert!(pa.iter().zip(&pb).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), back.to_json());
    assert_eq!(a.dims(), vec![14, 200, 300, 200, 1]);
}

#[test]
fn corrupt_model_file_is_rejected() {
    let model = ThrustModel::zeros(&[2, 3, 1]).unwrap();
    let text = model.to_json().replace("finsim-thrust-model", "other");
    assert!(ThrustModel::from_json(&text).is_err());
    let text = model.to_json().replacen("\"version\": 1", "\"version\": 9", 1);
    assert!(ThrustModel::from_json(&text).is_err());
}

/// Trials whose force is a function of the differential pressure only.
fn passthrough_trials(n: usize, seed: u64) -> Vec<ThrustTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let mut t = static_trial(60);
            t.id = format!("p{k}");
            let phase = rng.random_range(0.0..6.0);
            for i in 0..60 {
                let dp = 1.0e4 * (phase + 0.3 * i as f64).sin();
                t.p_left[i] = dp.max(0.0);
                t.p_right[i] = (-dp).max(0.0);
                t.force[i] = 0.02 * (dp / 1.0e4) + 0.01 * (dp / 1.0e4).powi(2);
                t.markers[i][2][1] = 0.015 + 1e-3 * (phase + 0.3 * i as f64).cos();
            }
            t
        })
        .collect()
}

#[test]
fn evaluation_matches_training_log_and_fits_passthrough() {
    let train = passthrough_trials(12, 13);
    let val = passthrough_trials(4, 14);
    let samples = ThrustSamples::from_trials(&train).unwrap();
    let cfg = TrainConfig {
        epochs: 150,
        seed: 5,
        ..TrainConfig::default()
    };
    let model = train_thrust_model(&samples, &cfg).unwrap();
    let ebt = EbtParams::default();
    let own = evaluate_thrust_model(&model, &train, &ebt).unwrap();
    assert_eq!(own.mse, *model.log.as_ref().unwrap().train_mse.last().unwrap());
    let metrics = evaluate_thrust_model(&model, &val, &ebt).unwrap();
    assert!(metrics.r2 > 0.99, "{}", metrics.r2);
    assert_eq!(metrics.trials.len(), 4);
    for (r, t) in metrics.trials.iter().zip(&val) {
        assert!(r.mean_ebt >= 0.0);
        assert_eq!(r.samples, t.len() - 1);
        let rows = trial_predictions(&model, t, &ebt).unwrap();
        assert!(rows.iter().all(|row| row[2] >= 0.0));
    }
    let table = prediction_table(&trial_predictions(&model, &val[0], &ebt).unwrap());
    assert!(table.starts_with("t,f_measured,f_ebt,f_predicted\n"));
    assert_eq!(table.lines().count(), 60);
}
