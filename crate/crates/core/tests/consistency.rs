mod common;

use common::{arrival, gaussian, rng, Instance};
use gunloc_core::consistency::{select_all, DEFAULT_TOLERANCE};
use gunloc_core::{
    consistency_filter, predict_arrival, select_pulse_set, solve, Candidate, CandidatePool, ConsistencyParams, Error,
    GeometricConstraint, Position, PulseSet, SolverConfig, SolverKind,
};
use rand::Rng;

fn cfg(c: f64) -> SolverConfig {
    SolverConfig::new(SolverKind::Mlg, GeometricConstraint::TwoD, c)
}

fn direct(inst: &Instance, prefix: &str) -> Vec<Candidate> {
    inst.sensors
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Candidate::new(
                format!("{prefix}{i}"),
                *p,
                arrival(&inst.source, inst.t_star, p, inst.c, true),
                1.0,
            )
        })
        .collect()
}

fn pool(pulses: Vec<Candidate>) -> CandidatePool {
    CandidatePool::from_pulses("pool", pulses).unwrap()
}

fn members(set: &PulseSet) -> Vec<(String, u64)> {
    let mut m: Vec<_> = set
        .observations()
        .iter()
        .map(|o| (o.sensor_id.clone(), o.arrival_time.to_bits()))
        .collect();
    m.sort();
    m
}

fn candidate_members(c: &[Candidate]) -> Vec<(String, u64)> {
    let mut m: Vec<_> = c
        .iter()
        .map(|p| (p.sensor_id.clone(), p.arrival_time.to_bits()))
        .collect();
    m.sort();
    m
}

fn truth_solution(inst: &Instance) -> gunloc_core::ShotSolution {
    let set = inst.pulse_set(true);
    solve(&set, &cfg(inst.c)).unwrap()
}

#[test]
fn filter_keeps_exact_arrivals() {
    let inst = Instance::random(&mut rng(1), 8, 0.0);
    let p = pool(direct(&inst, "s"));
    let kept = consistency_filter(&p, &truth_solution(&inst), &ConsistencyParams::default(), inst.c);
    assert_eq!(kept.len(), 8);
}

#[test]
fn filter_drops_a_late_echo() {
    let inst = Instance::random(&mut rng(2), 8, 0.0);
    let mut pulses = direct(&inst, "s");
    pulses[3].arrival_time += 0.120;
    let kept = consistency_filter(
        &pool(pulses),
        &truth_solution(&inst),
        &ConsistencyParams::default(),
        inst.c,
    );
    assert_eq!(kept.len(), 7);
    assert!(kept.iter().all(|c| c.sensor_id != "s3"));
}

#[test]
fn filter_keeps_the_best_pulse_per_sensor() {
    let inst = Instance::random(&mut rng(3), 8, 0.0);
    let mut pulses = direct(&inst, "s");
    let base = pulses[0].clone();
    pulses[0].arrival_time += 0.015;
    pulses.push(Candidate {
        arrival_time: base.arrival_time + 0.005,
        ..base.clone()
    });
    let kept = consistency_filter(
        &pool(pulses),
        &truth_solution(&inst),
        &ConsistencyParams::default(),
        inst.c,
    );
    let s0: Vec<_> = kept.iter().filter(|c| c.sensor_id == "s0").collect();
    assert_eq!(s0.len(), 1);
    assert_eq!(s0[0].arrival_time, base.arrival_time + 0.005);
}

#[test]
fn echoes_are_rejected() {
    for seed in 0..20u64 {
        let mut r = rng(100 + seed);
        let inst = Instance::random(&mut r, 8, 0.0);
        let direct = direct(&inst, "s");
        let mut pulses = direct.clone();
        for _ in 0..3 {
            let k = r.random_range(0..8);
            pulses.push(Candidate {
                arrival_time: direct[k].arrival_time + r.random_range(0.08..0.3),
                score: 0.5,
                ..direct[k].clone()
            });
        }
        let (set, sol) = select_pulse_set(&pool(pulses), &ConsistencyParams::default(), &cfg(inst.c)).unwrap();
        assert_eq!(members(&set), candidate_members(&direct), "seed {seed}");
        assert!(sol.rms_residual < 1e-9);
    }
}

#[test]
fn interleaved_shots_are_separated() {
    let mut r = rng(200);
    let a = Instance::random(&mut r, 8, 0.0);
    // A second source heard on six of the same sensors, fired 0.4 s later so the arrivals interleave.
    let b = Instance {
        sensors: a.sensors[..6].to_vec(),
        source: Position::new(r.random_range(200.0..800.0), r.random_range(200.0..800.0), 0.0),
        t_star: a.t_star + 0.4,
        c: a.c,
    };
    let first = direct(&a, "s");
    let second = direct(&b, "s");
    let p = pool(first.iter().chain(&second).cloned().collect());
    let params = ConsistencyParams::default();
    let (set, _) = select_pulse_set(&p, &params, &cfg(a.c)).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(members(&set), candidate_members(&first));
    let (rest, _) = select_pulse_set(&p.without(&set), &params, &cfg(a.c)).unwrap();
    assert_eq!(members(&rest), candidate_members(&second));

    let all = select_all(&p, &params, &cfg(a.c)).unwrap();
    assert_eq!(all.len(), 2);
}

fn noise_pool(seed: u64) -> CandidatePool {
    let mut r = rng(30_000 + seed);
    let pulses = (0..10)
        .map(|s| {
            let p = Position::new(r.random_range(0.0..1000.0), r.random_range(0.0..1000.0), 0.0);
            Candidate::new(format!("s{s}"), p, r.random_range(0.0..5.0), 1.0)
        })
        .collect();
    CandidatePool::new("noise", pulses, (0.0, 5.0), 8).unwrap()
}

fn empty_rate(params: &ConsistencyParams) -> f64 {
    let seeds = 200;
    let empty = (0..seeds)
        .filter(|&s| match select_pulse_set(&noise_pool(s), params, &cfg(343.0)) {
            Err(Error::NoConsistentSet) => true,
            Ok(_) => false,
            Err(e) => panic!("{e}"),
        })
        .count();
    empty as f64 / seeds as f64
}

#[test]
fn random_noise_rarely_forms_a_set() {
    // With the d + 2 minimum, four random times on ten sensors fit some
    // source within 40 ms in roughly one pool in seven.
    let default_rate = empty_rate(&ConsistencyParams::default());
    assert!(default_rate >= 0.8, "default minimum: {default_rate}");
    let strict = ConsistencyParams {
        min_sensors: Some(5),
        ..ConsistencyParams::default()
    };
    let strict_rate = empty_rate(&strict);
    assert!(strict_rate >= 0.99, "minimum of five: {strict_rate}");
}

#[test]
fn selection_is_a_fixed_point() {
    for seed in 0..10u64 {
        let mut r = rng(300 + seed);
        let inst = Instance::random(&mut r, 9, 0.0);
        let mut pulses: Vec<Candidate> = direct(&inst, "s")
            .into_iter()
            .map(|mut c| {
                c.arrival_time += gaussian(&mut r, 5e-3);
                c
            })
            .collect();
        pulses[0].arrival_time += 0.03;
        for k in 0..4 {
            let mut echo = pulses[k].clone();
            echo.arrival_time += r.random_range(0.05..0.2);
            pulses.push(echo);
        }
        let params = ConsistencyParams::default();
        let (set, sol) = select_pulse_set(&pool(pulses), &params, &cfg(inst.c)).unwrap();
        assert!(set.len() >= 4);
        assert!(sol.residuals.values().all(|r| r.abs() <= DEFAULT_TOLERANCE));
        let again =
            CandidatePool::from_pulses("again", set.observations().iter().map(Candidate::from).collect()).unwrap();
        let (set2, _) = select_pulse_set(&again, &params, &cfg(inst.c)).unwrap();
        assert_eq!(members(&set2), members(&set), "seed {seed}");
    }
}

#[test]
fn consistent_additions_never_shrink_the_set() {
    for seed in 0..10u64 {
        let mut r = rng(400 + seed);
        let inst = Instance::random(&mut r, 8, 0.0);
        let mut pulses = direct(&inst, "s");
        for k in 0..3 {
            let mut echo = pulses[k].clone();
            echo.arrival_time += r.random_range(0.08..0.3);
            pulses.push(echo);
        }
        let params = ConsistencyParams::default();
        let (set, sol) = select_pulse_set(&pool(pulses.clone()), &params, &cfg(inst.c)).unwrap();
        let extra = Position::new(r.random_range(0.0..1000.0), r.random_range(0.0..1000.0), 0.0);
        let t = predict_arrival(
            &sol.position,
            sol.discharge_time,
            &extra,
            inst.c,
            &GeometricConstraint::TwoD,
        );
        pulses.push(Candidate::new("extra", extra, t, 1.0));
        let (bigger, _) = select_pulse_set(&pool(pulses), &params, &cfg(inst.c)).unwrap();
        assert!(bigger.len() >= set.len(), "seed {seed}");
        assert!(bigger.observations().iter().any(|o| o.sensor_id == "extra"));
    }
}

#[test]
fn large_pools_are_deterministic() {
    let mut r = rng(500);
    let inst = Instance::random(&mut r, 10, 0.0);
    let direct = direct(&inst, "s");
    let mut pulses = direct.clone();
    for k in 0..10 {
        let mut echo = direct[k].clone();
        echo.arrival_time += r.random_range(0.08..0.3);
        pulses.push(echo);
    }
    let p = pool(pulses);
    let params = ConsistencyParams::default();
    let (a, sa) = select_pulse_set(&p, &params, &cfg(inst.c)).unwrap();
    let (b, sb) = select_pulse_set(&p, &params, &cfg(inst.c)).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert_eq!(members(&a), candidate_members(&direct));
}

#[test]
fn degenerate_pools() {
    let empty = CandidatePool::from_pulses("e", Vec::new()).unwrap();
    assert!(matches!(
        select_pulse_set(&empty, &ConsistencyParams::default(), &cfg(343.0)),
        Err(Error::Precondition(_))
    ));
    let inst = Instance::random(&mut rng(6), 3, 0.0);
    assert_eq!(
        select_pulse_set(&pool(direct(&inst, "s")), &ConsistencyParams::default(), &cfg(inst.c)).unwrap_err(),
        Error::NoConsistentSet
    );
}
