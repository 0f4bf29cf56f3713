use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gunloc_core::consistency::select_all;
use gunloc_core::sim::EchoSpec;
use gunloc_core::{
    generate_scenario, solve, ConsistencyParams, GeometricConstraint, ScenarioConfig, SolverConfig, SolverKind,
};

fn scenario(sensors: usize, echoes: (usize, usize)) -> gunloc_core::Scenario {
    let cfg = ScenarioConfig {
        sensor_count: Some(sensors),
        echoes: EchoSpec {
            count: echoes,
            ..EchoSpec::default()
        },
        seed: 11,
        ..ScenarioConfig::clean()
    };
    generate_scenario(&cfg).unwrap()
}

fn solvers(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    for n in [6, 12, 24] {
        let sc = scenario(n, (0, 0));
        for kind in SolverKind::ALL {
            let cfg = SolverConfig::new(kind, GeometricConstraint::TwoD, sc.speed_of_sound);
            group.bench_with_input(BenchmarkId::new(kind.name(), n), &sc.direct, |b, set| {
                b.iter(|| solve(set, &cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn selection(c: &mut Criterion) {
    let mut group = c.benchmark_group("select_all");
    group.sample_size(20);
    for (n, echoes) in [(8, (0, 1)), (12, (1, 2))] {
        let sc = scenario(n, echoes);
        let cfg = SolverConfig::new(SolverKind::Mlg, GeometricConstraint::TwoD, sc.speed_of_sound);
        let params = ConsistencyParams::default();
        group.bench_with_input(BenchmarkId::from_parameter(sc.pool.len()), &sc.pool, |b, pool| {
            b.iter(|| select_all(pool, &params, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, solvers, selection);
criterion_main!(benches);
