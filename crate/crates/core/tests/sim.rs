use gunloc_core::sim::{accuracy_report_for, reduced_density_outcomes, EchoSpec, NlosSpec, TrialOutcome};
use gunloc_core::{
    generate_scenario, reduced_density_trial, GeometricConstraint, Position, ScenarioConfig, SolverConfig, SolverKind,
    TrialSpec,
};

#[test]
fn scenarios_are_deterministic_per_seed() {
    let cfg = ScenarioConfig {
        seed: 42,
        ..ScenarioConfig::default()
    };
    let a = generate_scenario(&cfg).unwrap();
    let b = generate_scenario(&cfg).unwrap();
    assert_eq!(a.direct, b.direct);
    assert_eq!(a.pool, b.pool);
    assert_eq!(a.nlos_sensors, b.nlos_sensors);
    let c = generate_scenario(&ScenarioConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.direct, c.direct);
}

#[test]
fn timing_noise_has_the_configured_spread() {
    let sigma = 1e-3;
    let mut residuals = Vec::new();
    for seed in 0..300 {
        let cfg = ScenarioConfig {
            seed,
            timing_noise_sigma: sigma,
            ..ScenarioConfig::clean()
        };
        let sc = generate_scenario(&cfg).unwrap();
        for o in sc.direct.observations() {
            residuals.push(o.arrival_time - sc.truth_time - sc.truth.distance(&o.position) / sc.speed_of_sound);
        }
    }
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let sd = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd / sigma - 1.0).abs() < 0.05, "sample sd {sd}");
    assert!(mean.abs() < 4.0 * sigma / n.sqrt());
}

#[test]
fn nlos_delays_follow_the_spec() {
    let mut delayed = 0;
    let mut total = 0;
    for seed in 0..200 {
        let cfg = ScenarioConfig {
            seed,
            timing_noise_sigma: 0.0,
            nlos: NlosSpec::default(),
            ..ScenarioConfig::default()
        };
        let sc = generate_scenario(&cfg).unwrap();
        for o in sc.direct.observations() {
            let excess = o.arrival_time - sc.truth_time - sc.truth.distance(&o.position) / sc.speed_of_sound;
            total += 1;
            if sc.nlos_sensors.contains(&o.sensor_id) {
                delayed += 1;
                assert!((0.005 - 1e-9..=0.040 + 1e-9).contains(&excess), "{excess}");
            } else {
                assert!(excess.abs() < 1e-9);
            }
        }
    }
    let rate = delayed as f64 / total as f64;
    assert!((rate - 0.2).abs() < 0.03, "NLOS rate {rate}");
}

#[test]
fn echoes_trail_the_direct_arrival() {
    let cfg = ScenarioConfig {
        seed: 5,
        echoes: EchoSpec {
            count: (2, 3),
            ..EchoSpec::default()
        },
        ..ScenarioConfig::clean()
    };
    let sc = generate_scenario(&cfg).unwrap();
    for o in sc.direct.observations() {
        let level = o.amplitude_dbspl.unwrap();
        let echoes: Vec<_> = sc
            .pool
            .pulses()
            .iter()
            .filter(|p| p.sensor_id == o.sensor_id && p.arrival_time != o.arrival_time)
            .collect();
        assert!((2..=3).contains(&echoes.len()));
        for e in echoes {
            let delay = e.arrival_time - o.arrival_time;
            assert!((0.08..=0.3).contains(&delay));
            assert!((e.amplitude_dbspl.unwrap() - (level - 6.0)).abs() < 1e-12);
        }
    }
}

#[test]
fn amplitudes_fall_with_range_and_respect_full_scale() {
    let cfg = ScenarioConfig {
        seed: 8,
        excess_attenuation_db: (0.0, 0.0),
        sensor_count: Some(30),
        ..ScenarioConfig::clean()
    };
    let sc = generate_scenario(&cfg).unwrap();
    for o in sc.direct.observations() {
        let r = sc.truth.distance(&o.position).max(1.0);
        let expected = (140.0 - 20.0 * r.log10()).min(93.0 + 20.0 * 2f64.sqrt().log10());
        assert!((o.amplitude_dbspl.unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn accuracy_report_matches_hand_computation() {
    // A cross rotated by 45°, centred 5 m from the survey point.
    let survey = Position::new(10.0, -4.0, 1.0);
    let (cx, cy) = (13.0, 0.0);
    let pts = [(2.0, 2.0), (-2.0, -2.0), (0.5, -0.5), (-0.5, 0.5)];
    let shots: Vec<(String, Position)> = pts
        .iter()
        .enumerate()
        .map(|(i, &(dx, dy))| (format!("s{i}"), Position::new(cx + dx, cy + dy, 3.0)))
        .collect();
    let rep = accuracy_report_for(&shots, &survey, 5).unwrap();
    assert!((rep.epsilon_centroid - 5.0).abs() < 1e-12);
    assert!((rep.sigma1.unwrap() - 2.0).abs() < 1e-12);
    assert!((rep.sigma2.unwrap() - 0.5).abs() < 1e-12);
    assert!((rep.epsilon_z - 2.0).abs() < 1e-12);
    let expected_rms = (shots
        .iter()
        .map(|(_, p)| p.horizontal_distance(&survey).powi(2))
        .sum::<f64>()
        / 4.0)
        .sqrt();
    assert!((rep.epsilon_rms - expected_rms).abs() < 1e-12);
    assert_eq!(rep.detection_rate(), 0.8);
    assert_eq!(rep.cdf.len(), 25);
    assert!(rep.cdf.windows(2).all(|w| w[0].1 <= w[1].1));
    assert!(rep.cdf.last().unwrap().1 <= rep.detection_rate());
    assert_eq!(rep.cdf[24].1, 0.8);
}

#[test]
fn reduced_density_trials_are_reproducible_and_gated() {
    let sc = generate_scenario(&ScenarioConfig {
        seed: 21,
        ..ScenarioConfig::default()
    })
    .unwrap();
    let cfg = SolverConfig::new(SolverKind::Mlg, GeometricConstraint::TwoD, sc.speed_of_sound);
    let spec = TrialSpec::new(6, 99);
    let a = reduced_density_trial(&sc.direct, &sc.truth, &spec, &cfg)
        .unwrap()
        .unwrap();
    let b = reduced_density_trial(&sc.direct, &sc.truth, &spec, &cfg)
        .unwrap()
        .unwrap();
    assert_eq!(a, b);
    assert_eq!(a.attempted, 25);

    // A gate above every level rejects all trials.
    let loud = TrialSpec {
        gate_dbspl: 200.0,
        ..spec.clone()
    };
    let outcomes = reduced_density_outcomes(&sc.direct, &loud, &cfg).unwrap();
    assert!(outcomes.iter().all(|o| matches!(o, TrialOutcome::Gated)));
    assert!(reduced_density_trial(&sc.direct, &sc.truth, &loud, &cfg)
        .unwrap()
        .is_none());

    // k below d + 2 cannot be solved.
    assert!(reduced_density_trial(&sc.direct, &sc.truth, &TrialSpec::new(3, 1), &cfg).is_err());
}
