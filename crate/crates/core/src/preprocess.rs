//! Noise filtering, resampling, amplitude normalization and fixed-length
//! respiratory-cycle segmentation.
//!
//! Pipeline order is filter -> resample -> normalize -> segment. Filtering is
//! causal single-pass through a cascade of second-order sections designed by
//! bilinear transform of the analog Butterworth prototype with frequency
//! prewarping; it runs at the recording's native rate, before resampling.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ingest::{CycleAnnotation, Disease, RecordingMeta};
use crate::scalar::Real;

/// Target rate every recording is resampled to.
pub const SEGMENT_FS: f64 = 22050.0;
/// Materialized segment duration in seconds.
pub const SEGMENT_SECONDS: f64 = 6.0;
/// Samples per materialized segment: 6 s at 22050 Hz.
pub const SEGMENT_SAMPLES: usize = 132_300;
/// Cycles shorter than this are dropped.
pub const MIN_CYCLE_SECONDS: f64 = 3.0;

/// A sampled waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    pub samples: Vec<T>,
    /// Samples per second.
    pub fs: f64,
}

impl<T: Real> Signal<T> {
    /// Validating constructor: finite samples, positive rate, length >= 1.
    pub fn new(samples: Vec<T>, fs: f64) -> Result<Self> {
        if fs <= 0.0 || !fs.is_finite() {
            return Err(Error::BadConfig(format!("sample rate must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::TooShort { got: 0, need: 1 });
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::BadConfig("signal contains non-finite samples".to_string()));
        }
        Ok(Self { samples, fs })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// One second-order section, direct form II transposed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Cascade of second-order sections tied to a design rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub sections: Vec<Biquad>,
    /// Rate the cascade was designed for.
    pub fs: f64,
}

impl FilterCoefficients {
    /// Complex response at `freq_hz`, evaluated directly on the unit circle.
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / self.fs;
        let z1 = Complex64::new(0.0, -w).exp();
        let z2 = z1 * z1;
        let mut h = Complex64::new(1.0, 0.0);
        for s in &self.sections {
            let num = Complex64::new(s.b0, 0.0) + z1 * s.b1 + z2 * s.b2;
            let den = Complex64::new(1.0, 0.0) + z1 * s.a1 + z2 * s.a2;
            h *= num / den;
        }
        h
    }

    /// Magnitude response in dB at `freq_hz`.
    pub fn gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.response_at(freq_hz).norm().log10()
    }
}

/// Analog prototype poles of an order-`n` Butterworth lowpass.
fn butterworth_prototype_poles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + n as f64 + 1.0) / (2.0 * n as f64);
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect()
}

/// Design an order-`order` Butterworth bandpass as `order` second-order
/// sections via bilinear transform with frequency prewarping.
pub fn design_bandpass(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Result<FilterCoefficients> {
    if !(low_hz > 0.0 && high_hz > low_hz && high_hz < fs / 2.0) {
        return Err(Error::InvalidBand { low: low_hz, high: high_hz, fs });
    }
    if order == 0 {
        return Err(Error::BadConfig("filter order must be positive".to_string()));
    }

    let k = 2.0 * fs; // bilinear constant
    let warp = |f: f64| k * (std::f64::consts::PI * f / fs).tan();
    let wl = warp(low_hz);
    let wh = warp(high_hz);
    let w0sq = wl * wh;
    let bw = wh - wl;

    // lowpass prototype -> bandpass: each pole splits in two
    let mut analog_poles = Vec::with_capacity(2 * order);
    for p in butterworth_prototype_poles(order) {
        let half = p * (bw / 2.0);
        let disc = (half * half - w0sq).sqrt();
        analog_poles.push(half + disc);
        analog_poles.push(half - disc);
    }

    // bilinear transform of poles; zeros land at z = +1 (n) and z = -1 (n)
    let mut gain = Complex64::new(bw.powi(order as i32), 0.0) * Complex64::new(k, 0.0).powu(order as u32);
    let mut digital_poles = Vec::with_capacity(analog_poles.len());
    for p in analog_poles {
        gain /= Complex64::new(k, 0.0) - p;
        digital_poles.push((Complex64::new(k, 0.0) + p) / (Complex64::new(k, 0.0) - p));
    }
    debug_assert!(gain.im.abs() < 1e-6 * gain.re.abs().max(1e-30), "gain should be real");
    let gain = gain.re;

    for p in &digital_poles {
        if p.norm() >= 1.0 {
            return Err(Error::BadConfig(format!("unstable design: pole at |z| = {}", p.norm())));
        }
    }

    // pair conjugate poles (and real poles among themselves) into sections
    let tol = 1e-9;
    let mut complex_upper: Vec<Complex64> = digital_poles.iter().filter(|p| p.im > tol).copied().collect();
    let mut reals: Vec<f64> = digital_poles.iter().filter(|p| p.im.abs() <= tol).map(|p| p.re).collect();
    complex_upper.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    reals.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut sections = Vec::with_capacity(order);
    let g = gain.abs().powf(1.0 / order as f64);
    for p in complex_upper {
        // (z - p)(z - conj p) = z^2 - 2 Re(p) z + |p|^2; numerator (z-1)(z+1)
        sections.push(Biquad { b0: g, b1: 0.0, b2: -g, a1: -2.0 * p.re, a2: p.norm_sqr() });
    }
    for pair in reals.chunks(2) {
        match pair {
            [r1, r2] => sections.push(Biquad { b0: g, b1: 0.0, b2: -g, a1: -(r1 + r2), a2: r1 * r2 }),
            [r] => sections.push(Biquad { b0: g, b1: -g, b2: 0.0, a1: -r, a2: 0.0 }),
            _ => unreachable!(),
        }
    }
    if gain < 0.0 {
        if let Some(first) = sections.first_mut() {
            first.b0 = -first.b0;
            first.b1 = -first.b1;
            first.b2 = -first.b2;
        }
    }
    debug_assert_eq!(sections.len(), order);

    Ok(FilterCoefficients { sections, fs })
}

/// Causal single-pass filtering with zero initial state.
pub fn apply_filter<T: Real>(sig: &Signal<T>, coeffs: &FilterCoefficients) -> Result<Signal<T>> {
    if (sig.fs - coeffs.fs).abs() > 1e-9 * coeffs.fs {
        return Err(Error::SampleRateMismatch { got: sig.fs, expected: coeffs.fs });
    }
    let mut out: Vec<f64> = sig.samples.iter().map(|s| s.as_f64()).collect();
    for s in &coeffs.sections {
        let mut s1 = 0.0f64;
        let mut s2 = 0.0f64;
        for x in out.iter_mut() {
            let y = s.b0 * *x + s1;
            s1 = s.b1 * *x - s.a1 * y + s2;
            s2 = s.b2 * *x - s.a2 * y;
            *x = y;
        }
    }
    Ok(Signal { samples: out.into_iter().map(T::of).collect(), fs: sig.fs })
}

/// Best rational approximation of `ratio` with denominator at most `max_den`.
fn rationalize(ratio: f64, max_den: u64) -> (u64, u64) {
    let mut x = ratio;
    let (mut n0, mut d0, mut n1, mut d1) = (0u64, 1u64, 1u64, 0u64);
    for _ in 0..64 {
        let a = x.floor();
        let ai = a as u64;
        let n2 = ai.saturating_mul(n1).saturating_add(n0);
        let d2 = ai.saturating_mul(d1).saturating_add(d0);
        if d2 > max_den {
            break;
        }
        n0 = n1;
        d0 = d1;
        n1 = n2;
        d1 = d2;
        let frac = x - a;
        if frac.abs() < 1e-12 {
            break;
        }
        x = 1.0 / frac;
    }
    (n1.max(1), d1.max(1))
}

/// Half-width of the windowed-sinc kernel in input samples (per phase).
const SINC_HALF_TAPS: usize = 32;

/// Windowed-sinc polyphase rational resampling to `target_fs`.
///
/// Output length is `round(len * target_fs / fs)`; when the rates already
/// match the input is returned bit-identical.
pub fn resample<T: Real>(sig: &Signal<T>, target_fs: f64) -> Signal<T> {
    assert!(target_fs > 0.0, "target rate must be positive");
    if (sig.fs - target_fs).abs() < 1e-9 {
        return sig.clone();
    }

    let n_in = sig.samples.len();
    let out_len = ((n_in as f64) * target_fs / sig.fs).round().max(1.0) as usize;

    // up = target phase count, down = input step per output sample
    let (up, down) = rationalize(target_fs / sig.fs, 1 << 15);
    // anti-alias/anti-image cutoff in cycles per input sample
    let cutoff = 0.5 * (up as f64 / down as f64).min(1.0);

    let kernel = |t: f64| -> f64 {
        let half = SINC_HALF_TAPS as f64;
        if t.abs() >= half {
            return 0.0;
        }
        let sinc = if t == 0.0 {
            1.0
        } else {
            let a = std::f64::consts::PI * 2.0 * cutoff * t;
            a.sin() / a
        };
        // Blackman window over [-half, half]
        let u = std::f64::consts::PI * (t / half + 1.0);
        let w = 0.42 - 0.5 * u.cos() + 0.08 * (2.0 * u).cos();
        2.0 * cutoff * sinc * w
    };

    // per-phase taps, normalized to unit DC gain
    let phase_count = up as usize;
    let taps = 2 * SINC_HALF_TAPS;
    let mut phases: Option<Vec<f64>> = None;
    if phase_count <= 8192 {
        let mut table = vec![0.0f64; phase_count * taps];
        for p in 0..phase_count {
            let frac = p as f64 / up as f64;
            let row = &mut table[p * taps..(p + 1) * taps];
            let mut sum = 0.0;
            for (ti, h) in row.iter_mut().enumerate() {
                let k = ti as isize - SINC_HALF_TAPS as isize + 1;
                *h = kernel(k as f64 - frac);
                sum += *h;
            }
            if sum != 0.0 {
                for h in row.iter_mut() {
                    *h /= sum;
                }
            }
        }
        phases = Some(table);
    }

    let input: Vec<f64> = sig.samples.iter().map(|s| s.as_f64()).collect();
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len as u64 {
        let num = j * down;
        let base = (num / up) as isize;
        let phase = (num % up) as usize;
        let acc = if let Some(table) = &phases {
            let row = &table[phase * taps..(phase + 1) * taps];
            let mut acc = 0.0;
            for (ti, &h) in row.iter().enumerate() {
                let idx = base + ti as isize - SINC_HALF_TAPS as isize + 1;
                if idx >= 0 && (idx as usize) < n_in {
                    acc += h * input[idx as usize];
                }
            }
            acc
        } else {
            let frac = phase as f64 / up as f64;
            let mut acc = 0.0;
            let mut norm = 0.0;
            for ti in 0..taps {
                let k = ti as isize - SINC_HALF_TAPS as isize + 1;
                let h = kernel(k as f64 - frac);
                norm += h;
                let idx = base + k;
                if idx >= 0 && (idx as usize) < n_in {
                    acc += h * input[idx as usize];
                }
            }
            if norm != 0.0 {
                acc / norm
            } else {
                acc
            }
        };
        out.push(T::of(acc));
    }

    Signal { samples: out, fs: target_fs }
}

/// Peak normalization to [-1, 1]. All-zero input is returned unchanged.
pub fn normalize<T: Real>(sig: &Signal<T>) -> Signal<T> {
    let peak = sig.samples.iter().fold(T::zero(), |m, s| m.max(s.abs()));
    if peak == T::zero() {
        return sig.clone();
    }
    Signal { samples: sig.samples.iter().map(|&s| s / peak).collect(), fs: sig.fs }
}

/// A fixed-length preprocessed respiratory-cycle segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSegment<T> {
    /// Exactly [`SEGMENT_SAMPLES`] values in [-1, 1].
    pub samples: Vec<T>,
    pub patient_id: u32,
    pub disease: Disease,
    pub recording_id: String,
    /// Index of the source cycle in its annotation file.
    pub cycle_index: usize,
}

impl<T: Real> CycleSegment<T> {
    /// Check the type invariants; called on every construction.
    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != SEGMENT_SAMPLES {
            return Err(Error::ShapeMismatch(format!(
                "segment has {} samples, expected {SEGMENT_SAMPLES}",
                self.samples.len()
            )));
        }
        if self.samples.iter().any(|s| s.abs() > T::one()) {
            return Err(Error::BadConfig("segment sample outside [-1, 1]".to_string()));
        }
        if self.disease.is_excluded() {
            return Err(Error::ExcludedClass(self.disease.name().to_string()));
        }
        Ok(())
    }
}

/// Per-recording segmentation summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegmentDrops {
    /// Cycles shorter than [`MIN_CYCLE_SECONDS`] of material.
    pub too_short: usize,
    /// Cycles from Asthma/LRTI patients.
    pub excluded_class: usize,
}

/// Materialize annotated cycles into fixed 6 s segments.
///
/// Cycles with less than 3 s of material (after clipping to the signal end)
/// are dropped. Kept cycles are truncated to 6 s, or extended by cyclic
/// repetition of their own samples when between 3 and 6 s.
pub fn extract_segments<T: Real>(
    sig: &Signal<T>,
    cycles: &[CycleAnnotation],
    meta: &RecordingMeta,
    disease: Disease,
) -> (Vec<CycleSegment<T>>, SegmentDrops) {
    assert!(
        (sig.fs - SEGMENT_FS).abs() < 1e-9,
        "segmentation expects a {SEGMENT_FS} Hz signal, got {}",
        sig.fs
    );
    let min_samples = (MIN_CYCLE_SECONDS * SEGMENT_FS).round() as usize;
    let mut segments = Vec::new();
    let mut drops = SegmentDrops::default();

    for (cycle_index, cycle) in cycles.iter().enumerate() {
        let start = ((cycle.start_s * SEGMENT_FS).round() as usize).min(sig.len());
        let end = ((cycle.end_s * SEGMENT_FS).round() as usize).min(sig.len());
        let avail = end.saturating_sub(start);
        if avail < min_samples {
            drops.too_short += 1;
            continue;
        }
        if disease.is_excluded() {
            drops.excluded_class += 1;
            continue;
        }
        let take = avail.min(SEGMENT_SAMPLES);
        let src = &sig.samples[start..start + take];
        let samples: Vec<T> = (0..SEGMENT_SAMPLES).map(|i| src[i % take]).collect();
        let segment = CycleSegment {
            samples,
            patient_id: meta.patient_id,
            disease,
            recording_id: meta.recording_id(),
            cycle_index,
        };
        segment.validate().expect("constructed segment satisfies invariants");
        segments.push(segment);
    }
    (segments, drops)
}
