mod common;

use std::io::Cursor;

use common::{gaussian, impulse, rng};
use gunloc_core::pulse::{analytic_envelope, step_kernel, DEFAULT_TAU};
use gunloc_core::{detect_pulses, AudioSegment};

/// Offset of the strongest detection from the onset sample, seconds.
fn peak_offset(fs: f64, tau: f64, onset: f64) -> f64 {
    let mut samples = vec![0.0; (2.0 * fs) as usize];
    impulse(&mut samples, fs, onset, 0.4);
    let seg = AudioSegment::new(samples, fs, 0.0).unwrap();
    let pulses = detect_pulses(&seg, tau, 1e-4).unwrap();
    let best = pulses.iter().max_by(|a, b| a.score.total_cmp(&b.score)).unwrap();
    best.sample_index as f64 / fs - (onset * fs).round() / fs
}

// Reference offsets from a full-length FFT Hilbert envelope convolved
// directly with the kernel, computed in double precision outside this crate.
#[test]
fn blast_peak_offsets_match_reference() {
    for (tau, expected) in [
        (0.050, -3.25e-3),
        (0.020, -1.583e-3),
        (0.010, -0.75e-3),
        (0.005, -0.417e-3),
    ] {
        let got = peak_offset(12_000.0, tau, 0.8);
        assert!((got - expected).abs() < 0.1e-3, "tau {tau}: {got} vs {expected}");
    }
    let got = peak_offset(48_000.0, DEFAULT_TAU, 0.8);
    assert!((got + 3.25e-3).abs() < 0.1e-3, "48 kHz: {got}");
}

#[test]
fn separated_blasts_are_detected_once_each() {
    let fs = 12_000.0;
    let mut r = rng(5);
    let mut samples: Vec<f64> = (0..(3.0 * fs) as usize).map(|_| gaussian(&mut r, 0.005)).collect();
    let onsets = [0.5, 1.1, 2.3];
    for &t in &onsets {
        impulse(&mut samples, fs, t, 0.3);
    }
    let seg = AudioSegment::new(samples, fs, 100.0).unwrap();
    let pulses = detect_pulses(&seg, DEFAULT_TAU, 0.25 * 0.02 * 0.3).unwrap();
    assert_eq!(pulses.len(), 3);
    for (p, t) in pulses.iter().zip(onsets) {
        assert!((p.arrival_time - (100.0 + t)).abs() < 6e-3);
        // Arrival times are reported to the millisecond.
        assert!(((p.arrival_time * 1000.0).round() - p.arrival_time * 1000.0).abs() < 1e-6);
        assert!(p.peak_amplitude_dbspl > 93.0 + 20.0 * 0.25f64.log10());
    }
}

#[test]
fn close_blasts_merge() {
    let fs = 12_000.0;
    let mut samples = vec![0.0; (2.0 * fs) as usize];
    impulse(&mut samples, fs, 0.8, 0.4);
    impulse(&mut samples, fs, 0.82, 0.2);
    let seg = AudioSegment::new(samples, fs, 0.0).unwrap();
    assert_eq!(detect_pulses(&seg, DEFAULT_TAU, 1e-3).unwrap().len(), 1);
}

#[test]
fn envelope_of_sinusoid_is_its_amplitude() {
    let fs = 8_000.0;
    let samples: Vec<f64> = (0..16_000)
        .map(|i| 0.6 * (2.0 * std::f64::consts::PI * 437.0 * i as f64 / fs).sin())
        .collect();
    let env = analytic_envelope(&AudioSegment::new(samples, fs, 0.0).unwrap()).unwrap();
    // Away from the edges the analytic magnitude is flat.
    assert!(env[2000..14_000].iter().all(|e| (e - 0.6).abs() < 5e-3));
}

#[test]
fn kernel_at_default_tau() {
    let k = step_kernel(DEFAULT_TAU, 48_000.0).unwrap();
    assert_eq!(k.len(), 4800);
    assert!(k[..2400].windows(2).all(|w| w[0] < w[1]));
    assert!(k[2400..].iter().all(|&v| v == -0.5));
    assert!(k.iter().sum::<f64>().abs() < 1e-9);
}

#[test]
fn wav_input_round_trip() {
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, spec).unwrap();
        for i in 0..32_000i32 {
            let left = if (16_000..16_032).contains(&i) { 12_000 } else { 0 };
            w.write_sample(left as i16).unwrap();
            w.write_sample(-5i16).unwrap();
        }
        w.finalize().unwrap();
    }
    buf.set_position(0);
    let seg = AudioSegment::from_wav_reader(buf, 7.0).unwrap();
    assert_eq!(seg.sample_rate(), 16_000.0);
    assert_eq!(seg.samples().len(), 32_000);
    assert!((seg.samples()[16_000] - 12_000.0 / 32_768.0).abs() < 1e-12);
    assert_eq!(seg.start_time(), 7.0);

    let low = hound::WavSpec {
        sample_rate: 8_000,
        ..spec
    };
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = hound::WavWriter::new(&mut buf, low).unwrap();
        for _ in 0..100 {
            w.write_sample(0i16).unwrap();
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
    }
    buf.set_position(0);
    assert!(AudioSegment::from_wav_reader(buf, 0.0).is_err());
}
