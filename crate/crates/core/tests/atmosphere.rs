use gunloc_core::sim::travel_time;
use gunloc_core::{
    generate_scenario, locate, solve, wind_correct, Environment, GeometricConstraint, Position, ScenarioConfig,
    SolverConfig, SolverKind, WindMode,
};

#[test]
fn wind_correction_round_trip() {
    let cfg = ScenarioConfig {
        seed: 11,
        ..ScenarioConfig::clean()
    };
    let set = generate_scenario(&cfg).unwrap().direct;
    let t_star = set.first_arrival().unwrap() - 2.0;
    let there = wind_correct(&set, &Environment::new(15.0, (6.0, -3.0)).unwrap(), Some(t_star)).unwrap();
    let back = wind_correct(&there, &Environment::new(15.0, (-6.0, 3.0)).unwrap(), Some(t_star)).unwrap();
    for (a, b) in back.observations().iter().zip(set.observations()) {
        assert_eq!(a.sensor_id, b.sensor_id);
        assert!(a.position.distance(&b.position) < 1e-9);
        assert_eq!(a.arrival_time, b.arrival_time);
    }
}

#[test]
fn downwind_sensor_hears_earlier() {
    let src = Position::new(0.0, 0.0, 0.0);
    let east = Position::new(500.0, 0.0, 0.0);
    let still = travel_time(&src, &east, 343.0, (0.0, 0.0));
    assert!((still - 500.0 / 343.0).abs() < 1e-12);
    assert!(travel_time(&src, &east, 343.0, (10.0, 0.0)) < still);
    assert!((travel_time(&src, &east, 343.0, (10.0, 0.0)) - 500.0 / 353.0).abs() < 1e-12);
}

#[test]
fn two_pass_correction_removes_wind_bias() {
    let mut worst_corrected = 0.0f64;
    let mut worst_raw = 0.0f64;
    for seed in 0..20 {
        let cfg = ScenarioConfig {
            seed,
            wind: (8.0, -5.0),
            temperature_c: 12.0,
            ..ScenarioConfig::clean()
        };
        let sc = generate_scenario(&cfg).unwrap();
        let env = Environment::new(cfg.temperature_c, cfg.wind).unwrap();
        let solver = SolverConfig::new(SolverKind::Mlg, GeometricConstraint::TwoD, sc.speed_of_sound);
        let corrected = locate(&sc.direct, &solver, &env, WindMode::TwoPass).unwrap();
        worst_corrected = worst_corrected.max(corrected.position.horizontal_distance(&sc.truth));
        let raw = solve(&sc.direct, &solver).unwrap();
        worst_raw = worst_raw.max(raw.position.horizontal_distance(&sc.truth));
    }
    assert!(worst_corrected < 0.5, "two-pass error {worst_corrected} m");
    assert!(worst_raw > 2.0 * worst_corrected, "uncorrected {worst_raw} m");
}

#[test]
fn single_pass_is_no_better_than_two_pass() {
    let cfg = ScenarioConfig {
        seed: 3,
        wind: (12.0, 4.0),
        ..ScenarioConfig::clean()
    };
    let sc = generate_scenario(&cfg).unwrap();
    let env = Environment::new(cfg.temperature_c, cfg.wind).unwrap();
    let solver = SolverConfig::new(SolverKind::Mlg, GeometricConstraint::TwoD, sc.speed_of_sound);
    let one = locate(&sc.direct, &solver, &env, WindMode::SinglePass).unwrap();
    let two = locate(&sc.direct, &solver, &env, WindMode::TwoPass).unwrap();
    assert!(two.position.horizontal_distance(&sc.truth) <= one.position.horizontal_distance(&sc.truth) + 1e-9);
}
