use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use gunloc_core::pulse::{DEFAULT_TAU, DEFAULT_THRESHOLD};
use gunloc_core::{detect_pulses, AudioSegment};

/// Ten seconds of hum with a blast every two seconds.
fn recording(fs: f64) -> AudioSegment {
    let n = (10.0 * fs) as usize;
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / fs;
            let since = t % 2.0 - 1.0;
            let blast = if (0.0..0.05).contains(&since) {
                0.8 * (1.0 - since / 0.01) * (-since / 0.01).exp()
            } else {
                0.0
            };
            0.01 * (2.0 * std::f64::consts::PI * 60.0 * t).sin() + blast
        })
        .collect();
    AudioSegment::new(samples, fs, 0.0).unwrap()
}

fn detection(c: &mut Criterion) {
    let mut group = c.benchmark_group("detect_pulses");
    group.sample_size(20);
    for fs in [12_000.0, 48_000.0] {
        let seg = recording(fs);
        group.throughput(Throughput::Elements(seg.samples().len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(fs as u32), &seg, |b, seg| {
            b.iter(|| detect_pulses(seg, DEFAULT_TAU, DEFAULT_THRESHOLD).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, detection);
criterion_main!(benches);
