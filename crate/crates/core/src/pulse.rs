//! Impulse detection on digitised audio.
//!
//! The pipeline is: analytic envelope (blockwise frequency-domain Hilbert
//! transform) → convolution with a weighted step kernel → local maxima of the
//! response above a threshold. The arrival time of a pulse is the sample at
//! which the response peaks.

use std::collections::VecDeque;
use std::io::Read;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::FULL_SCALE_DBSPL;

/// Block length of the envelope pipeline; blocks overlap by half.
pub const BLOCK_LEN: usize = 2048;

/// Default kernel half-width, seconds.
pub const DEFAULT_TAU: f64 = 0.050;

/// Lowest sample rate accepted from WAV input, Hz.
pub const MIN_WAV_SAMPLE_RATE: u32 = 12_000;

/// Window after the arrival over which the peak amplitude is measured, seconds.
pub const PEAK_WINDOW: f64 = 0.250;

/// Default detection threshold in response units. A unit step in the envelope
/// peaks at 1/4, so this passes any step of at least 73 dB SPL with 20 % margin.
pub const DEFAULT_THRESHOLD: f64 = 0.8 * 0.1 / 4.0;

/// Mono audio normalised so that 1.0 is digital full scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment {
    samples: Vec<f64>,
    sample_rate: f64,
    start_time: f64,
}

impl AudioSegment {
    pub fn new(samples: Vec<f64>, sample_rate: f64, start_time: f64) -> Result<Self> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::InvalidInput(format!(
                "sample rate {sample_rate} must be positive"
            )));
        }
        if !start_time.is_finite() {
            return Err(Error::InvalidInput("start time must be finite".into()));
        }
        let limit = std::f64::consts::SQRT_2;
        if let Some(bad) = samples.iter().find(|s| !(s.abs() <= limit)) {
            return Err(Error::InvalidInput(format!(
                "sample {bad} outside normalised range ±√2"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Reads the first channel of a PCM WAV file (16/24/32-bit integer or 32-bit float).
    pub fn from_wav_path(path: impl AsRef<Path>, start_time: f64) -> Result<Self> {
        let path = path.as_ref();
        let reader = hound::WavReader::open(path).map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
        Self::from_wav(reader, start_time).map_err(|e| match e {
            Error::Audio(msg) => Error::Audio(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_wav_reader<R: Read>(reader: R, start_time: f64) -> Result<Self> {
        let reader = hound::WavReader::new(reader).map_err(|e| Error::Audio(e.to_string()))?;
        Self::from_wav(reader, start_time)
    }

    fn from_wav<R: Read>(mut reader: hound::WavReader<R>, start_time: f64) -> Result<Self> {
        let spec = reader.spec();
        if spec.sample_rate < MIN_WAV_SAMPLE_RATE {
            return Err(Error::Audio(format!(
                "sample rate {} Hz below the {} Hz minimum",
                spec.sample_rate, MIN_WAV_SAMPLE_RATE
            )));
        }
        let channels = spec.channels.max(1) as usize;
        let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (hound::SampleFormat::Float, 32) => reader
                .samples::<f32>()
                .map(|s| s.map(f64::from))
                .collect::<std::result::Result<_, _>>(),
            (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
                let scale = (1u64 << (bits - 1)) as f64;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f64 / scale))
                    .collect::<std::result::Result<_, _>>()
            }
            (format, bits) => return Err(Error::Audio(format!("unsupported sample format {format:?}/{bits}-bit"))),
        }
        .map_err(|e| Error::Audio(e.to_string()))?;
        let samples = interleaved.into_iter().step_by(channels).collect();
        AudioSegment::new(samples, spec.sample_rate as f64, start_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedPulse {
    /// Seconds, rounded to the millisecond.
    pub arrival_time: f64,
    /// Sample index of the response peak within the segment.
    pub sample_index: usize,
    /// Response value at the peak.
    pub score: f64,
    /// Peak amplitude over the window following the arrival.
    pub peak_amplitude_dbspl: f64,
}

/// `93 + 20 log10(a)`: dB SPL of a normalised amplitude.
pub fn amplitude_to_dbspl(normalized_amplitude: f64) -> Result<f64> {
    if !(normalized_amplitude > 0.0) {
        return Err(Error::Domain(format!(
            "amplitude {normalized_amplitude} must be positive"
        )));
    }
    Ok(FULL_SCALE_DBSPL + 20.0 * normalized_amplitude.log10())
}

/// Inverse of [`amplitude_to_dbspl`].
pub fn dbspl_to_amplitude(dbspl: f64) -> f64 {
    10f64.powf((dbspl - FULL_SCALE_DBSPL) / 20.0)
}

fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / len as f64).cos())
        .collect()
}

/// Magnitude of the analytic signal, sample by sample.
///
/// Computed on Hann-windowed blocks of [`BLOCK_LEN`] samples with 50 % overlap.
/// Each block is zero-padded to twice its length before the transform so the
/// Hilbert tails that spill past the block are kept, and the complex block
/// outputs are overlap-added. Periodic Hann windows at half overlap sum to one,
/// so the reconstruction is unity-gain everywhere. The segment mean is taken
/// out before the transform and added back to the real part: a constant has a
/// zero Hilbert transform, but a truncated one does not.
pub fn analytic_envelope(seg: &AudioSegment) -> Result<Vec<f64>> {
    let x = seg.samples();
    if x.is_empty() {
        return Err(Error::InvalidInput("empty audio segment".into()));
    }
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let hop = BLOCK_LEN / 2;
    let fft_len = 2 * BLOCK_LEN;
    // Output buffer is indexed in "padded" coordinates: sample i lives at i + lead.
    let lead = hop + BLOCK_LEN / 2;
    let n_blocks = n.div_ceil(hop) + 1;
    let mut acc = vec![Complex::new(0.0, 0.0); lead + n + fft_len];

    let window = periodic_hann(BLOCK_LEN);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    let offset = BLOCK_LEN / 2;
    let norm = 1.0 / fft_len as f64;

    for b in 0..n_blocks {
        // Block b covers signal samples [b*hop - hop, b*hop - hop + BLOCK_LEN).
        let start = (b * hop) as isize - hop as isize;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        let mut any = false;
        for (k, w) in window.iter().enumerate() {
            let idx = start + k as isize;
            if idx >= 0 && (idx as usize) < n {
                let v = (x[idx as usize] - mean) * w;
                any |= v != 0.0;
                buf[offset + k] = Complex::new(v, 0.0);
            }
        }
        if !any {
            continue;
        }
        fwd.process(&mut buf);
        // Analytic-signal multiplier: keep DC and Nyquist, double positive bins.
        for (k, c) in buf.iter_mut().enumerate() {
            let h = if k == 0 || k == fft_len / 2 {
                1.0
            } else if k < fft_len / 2 {
                2.0
            } else {
                0.0
            };
            *c *= h * norm;
        }
        inv.process(&mut buf);
        // buf[j] corresponds to signal sample start - offset + j.
        let base = lead as isize + start - offset as isize;
        for (j, c) in buf.iter().enumerate() {
            let pos = base + j as isize;
            if pos >= 0 && (pos as usize) < acc.len() {
                acc[pos as usize] += *c;
            }
        }
    }

    Ok(acc[lead..lead + n].iter().map(|c| (c + mean).norm()).collect())
}

/// Discrete taps of the weighted step kernel
/// `g(t) = t/τ + 1` on `(-τ, 0]`, `-1/2` on `(0, τ]`.
///
/// The kernel has `2M` taps with `M = round(τ·fs)`, sampled at cell centres
/// `t = (k + ½)/fs`, `k = -M .. M-1`, in ascending time. Cell-centre sampling
/// makes the ramp area exactly `M/2`, so the taps sum to zero.
pub fn step_kernel(tau: f64, sample_rate: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidInput(format!("tau {tau} must be positive")));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sample rate {sample_rate} must be positive"
        )));
    }
    let half = (tau * sample_rate).round();
    if half < 2.0 {
        return Err(Error::InvalidInput(format!(
            "tau·sample_rate = {} must be at least 2",
            tau * sample_rate
        )));
    }
    let m = half as usize;
    let mut taps = Vec::with_capacity(2 * m);
    for j in 0..m {
        taps.push((j as f64 + 0.5) / m as f64);
    }
    taps.extend(std::iter::repeat_n(-0.5, m));
    Ok(taps)
}

/// Convolution of an envelope with a step kernel, normalised by tap count.
///
/// Output index `i` places the kernel's `t = 0` boundary immediately before
/// sample `i`: the ramp weights samples `i, i+1, …` and the constant tail
/// weights samples `i-1, i-2, …`. Samples beyond either end take the mean of
/// the nearest `τ` of envelope, so a constant envelope maps to zero everywhere
/// and a single noisy edge sample does not read as a step.
pub fn pulse_response(envelope: &[f64], kernel: &[f64]) -> Result<Vec<f64>> {
    let n = envelope.len();
    let k = kernel.len();
    if k == 0 {
        return Err(Error::InvalidInput("empty kernel".into()));
    }
    if n < k {
        return Err(Error::InvalidInput(format!(
            "envelope ({n} samples) shorter than kernel ({k} taps)"
        )));
    }
    let half = k / 2;
    let edge = |part: &[f64]| part.iter().sum::<f64>() / part.len() as f64;
    let head = edge(&envelope[..half.max(1)]);
    let tail = edge(&envelope[n - half.max(1)..]);
    // ext[j] = envelope[j - k], padded with the edge means on either side.
    let ext_len = n + 2 * k;
    let conv_len = ext_len + k - 1;
    let fft_len = conv_len.next_power_of_two();
    let mut a: Vec<Complex<f64>> = (0..fft_len)
        .map(|j| {
            if j < ext_len {
                let v = match j.checked_sub(k) {
                    None => head,
                    Some(idx) if idx >= n => tail,
                    Some(idx) => envelope[idx],
                };
                Complex::new(v, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    let mut b: Vec<Complex<f64>> = (0..fft_len)
        .map(|j| Complex::new(if j < k { kernel[j] } else { 0.0 }, 0.0))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    inv.process(&mut a);
    let scale = 1.0 / (fft_len as f64 * k as f64);
    // x[i] = Σ_j kernel[j] · envelope[i + half - 1 - j] = conv(ext, kernel)[i + half - 1 + k]
    let shift = half + k - 1;
    Ok((0..n).map(|i| a[i + shift].re * scale).collect())
}

/// For each index, the maximum of the `width` values strictly before it
/// (negative infinity where there are none).
fn trailing_max(x: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; x.len()];
    let mut dq: VecDeque<usize> = VecDeque::new();
    for i in 0..x.len() {
        while let Some(&front) = dq.front() {
            if front + width < i {
                dq.pop_front();
            } else {
                break;
            }
        }
        if let Some(&front) = dq.front() {
            out[i] = x[front];
        }
        while let Some(&back) = dq.back() {
            if x[back] <= x[i] {
                dq.pop_back();
            } else {
                break;
            }
        }
        dq.push_back(i);
    }
    out
}

/// Indices that dominate every other sample within `half_width` on either side.
/// Ties are resolved toward the earliest sample.
fn local_maxima(x: &[f64], half_width: usize) -> Vec<usize> {
    let before = trailing_max(x, half_width);
    let rev: Vec<f64> = x.iter().rev().copied().collect();
    let mut after = trailing_max(&rev, half_width);
    after.reverse();
    (0..x.len()).filter(|&i| x[i] > before[i] && x[i] >= after[i]).collect()
}

fn round_to_millis(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// Finds pulses whose response peaks at or above `threshold`.
///
/// A peak must dominate its response within ±τ/2; peaks closer than τ are
/// merged in favour of the higher score. Arrival times are reported to the
/// millisecond.
pub fn detect_pulses(seg: &AudioSegment, tau: f64, threshold: f64) -> Result<Vec<DetectedPulse>> {
    let fs = seg.sample_rate();
    let kernel = step_kernel(tau, fs)?;
    if seg.samples().len() < kernel.len() {
        return Err(Error::InvalidInput(format!(
            "segment of {:.4} s is shorter than 2·tau = {:.4} s",
            seg.duration(),
            2.0 * tau
        )));
    }
    let envelope = analytic_envelope(seg)?;
    let response = pulse_response(&envelope, &kernel)?;

    let merge_radius = kernel.len() / 2;
    let half_window = (merge_radius / 2).max(1);
    let mut peaks: Vec<usize> = Vec::new();
    for i in local_maxima(&response, half_window) {
        if response[i] < threshold {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if i - *last < merge_radius => {
                if response[i] > response[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }

    let samples = seg.samples();
    let peak_len = (PEAK_WINDOW * fs).round() as usize;
    Ok(peaks
        .into_iter()
        .map(|i| {
            let end = (i + peak_len).min(samples.len());
            let peak = samples[i..end].iter().fold(0.0f64, |m, s| m.max(s.abs()));
            DetectedPulse {
                arrival_time: round_to_millis(seg.start_time() + i as f64 / fs),
                sample_index: i,
                score: response[i],
                peak_amplitude_dbspl: amplitude_to_dbspl(peak).unwrap_or(f64::NEG_INFINITY),
            }
        })
        .collect())
}
