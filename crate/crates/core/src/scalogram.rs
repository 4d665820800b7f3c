//! Continuous wavelet transform with a generalized Morse analytic wavelet and
//! scalogram power computation.
//!
//! The filter bank samples the frequency-domain wavelet on the DFT grid per
//! scale; each transform row is then the inverse DFT of `DFT(x) * psi_scale`.
//! Convolution is therefore periodic, which makes circular time-shift
//! covariance exact and keeps the transform linear in the input.

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Morse symmetry parameter used throughout.
pub const MORSE_GAMMA: f64 = 3.0;
/// Time-bandwidth product P^2; beta = P^2 / gamma.
pub const MORSE_TIME_BANDWIDTH: f64 = 60.0;
/// Voices per octave of the geometric scale grid.
pub const VOICES_PER_OCTAVE: u32 = 10;

/// Magnitude of the generalized Morse wavelet at angular frequency `omega`
/// (radians/sample), normalized to peak value 2.
///
/// Evaluated in the log domain so very large arguments underflow to zero
/// instead of producing inf * 0.
pub fn morse_magnitude(gamma: f64, beta: f64, omega: f64) -> f64 {
    if omega <= 0.0 {
        return 0.0;
    }
    let ln_amp = 2.0f64.ln() + (beta / gamma) * (std::f64::consts::E * gamma / beta).ln();
    (ln_amp + beta * omega.ln() - omega.powf(gamma)).exp()
}

/// Angular frequency (radians/sample) where the mother wavelet peaks.
pub fn morse_peak_omega(gamma: f64, beta: f64) -> f64 {
    (beta / gamma).powf(1.0 / gamma)
}

/// Frequency-domain Morse filter bank over a geometric scale grid.
pub struct FilterBank<T> {
    pub gamma: f64,
    pub beta: f64,
    pub voices_per_octave: u32,
    /// Strictly increasing scales (samples per radian).
    pub scales: Vec<f64>,
    /// Strictly decreasing center frequencies in Hz, one per scale.
    pub center_freqs: Vec<f64>,
    /// Wavelet magnitude per scale on the DFT grid (zero at and below 0 Hz).
    pub wavelets: Vec<Vec<T>>,
    /// Signal length the bank was built for.
    pub n: usize,
    /// Sample rate in Hz.
    pub fs: f64,
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
}

impl<T> fmt::Debug for FilterBank<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterBank")
            .field("gamma", &self.gamma)
            .field("beta", &self.beta)
            .field("voices_per_octave", &self.voices_per_octave)
            .field("n", &self.n)
            .field("fs", &self.fs)
            .field("scales", &self.scales.len())
            .finish()
    }
}

/// Build a Morse filter bank for signals of `n` samples at `fs` Hz.
///
/// The scale grid runs from the wavelet whose peak sits at Nyquist down to
/// the scale where two wavelet widths still fit the signal, stepping by
/// `2^(1/vpo)`.
pub fn build_filter_bank<T: Real>(
    n: usize,
    fs: f64,
    gamma: f64,
    time_bandwidth: f64,
    vpo: u32,
) -> Result<FilterBank<T>> {
    if n < 32 {
        return Err(Error::TooShort { got: n, need: 32 });
    }
    if !(gamma > 0.0 && time_bandwidth > gamma && vpo > 0) {
        return Err(Error::BadConfig(format!(
            "bad Morse parameters: gamma {gamma}, time-bandwidth {time_bandwidth}, vpo {vpo}"
        )));
    }
    let beta = time_bandwidth / gamma;
    let peak = morse_peak_omega(gamma, beta);

    // smallest scale: wavelet peak at Nyquist (pi rad/sample)
    let s_min = peak / std::f64::consts::PI;
    // largest scale: two wavelet widths (std devs) fit the signal
    let width = (beta * gamma).sqrt() / peak; // per unit scale, in samples
    let s_max = n as f64 / (2.0 * width);

    let octaves = (s_max / s_min).log2().max(0.0);
    let steps = (octaves * vpo as f64).floor() as usize;
    let mut scales = Vec::with_capacity(steps + 1);
    let mut center_freqs = Vec::with_capacity(steps + 1);
    for i in 0..=steps {
        let s = s_min * 2f64.powf(i as f64 / vpo as f64);
        scales.push(s);
        center_freqs.push(peak * fs / (2.0 * std::f64::consts::PI * s));
    }

    let mut wavelets = Vec::with_capacity(scales.len());
    let half = n / 2;
    for &s in &scales {
        let mut row = vec![T::zero(); n];
        for (k, value) in row.iter_mut().enumerate().take(half + 1).skip(1) {
            let omega = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            *value = T::of(morse_magnitude(gamma, beta, s * omega));
        }
        wavelets.push(row);
    }

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);

    Ok(FilterBank { gamma, beta, voices_per_octave: vpo, scales, center_freqs, wavelets, n, fs, fft, ifft })
}

/// Build the bank with the default Morse parametrization (gamma 3,
/// time-bandwidth 60, 10 voices per octave).
pub fn default_filter_bank<T: Real>(n: usize, fs: f64) -> Result<FilterBank<T>> {
    build_filter_bank(n, fs, MORSE_GAMMA, MORSE_TIME_BANDWIDTH, VOICES_PER_OCTAVE)
}

/// Complex CWT coefficients: one row per scale, one column per sample.
#[derive(Debug, Clone)]
pub struct CwtMatrix<T> {
    pub rows: Vec<Vec<Complex<T>>>,
    pub scales: Vec<f64>,
    pub center_freqs: Vec<f64>,
    pub fs: f64,
}

/// Scale-by-time power matrix (squared modulus of the CWT).
#[derive(Debug, Clone)]
pub struct Scalogram<T> {
    /// `power[scale][time] >= 0`.
    pub power: Vec<Vec<T>>,
    pub scales: Vec<f64>,
    pub center_freqs: Vec<f64>,
    pub fs: f64,
}

impl<T: Real> Scalogram<T> {
    pub fn n_scales(&self) -> usize {
        self.power.len()
    }

    pub fn n_samples(&self) -> usize {
        self.power.first().map(|r| r.len()).unwrap_or(0)
    }

    /// Row index with the largest total power.
    pub fn dominant_row(&self) -> usize {
        let mut best = 0usize;
        let mut best_power = T::neg_infinity();
        for (i, row) in self.power.iter().enumerate() {
            let total: T = row.iter().copied().sum();
            if total > best_power {
                best_power = total;
                best = i;
            }
        }
        best
    }
}

/// Forward CWT of `x` against a prepared bank.
pub fn cwt<T: Real>(x: &[T], bank: &FilterBank<T>) -> Result<CwtMatrix<T>> {
    if x.len() != bank.n {
        return Err(Error::LengthMismatch { got: x.len(), expected: bank.n });
    }
    let n = bank.n;
    let mut spectrum: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
    bank.fft.process(&mut spectrum);

    let inv_n = T::one() / T::of_usize(n);
    let mut rows = Vec::with_capacity(bank.scales.len());
    for wavelet in &bank.wavelets {
        let mut row: Vec<Complex<T>> =
            spectrum.iter().zip(wavelet).map(|(&s, &w)| s * w).collect();
        bank.ifft.process(&mut row);
        for v in &mut row {
            *v = *v * inv_n;
        }
        rows.push(row);
    }
    Ok(CwtMatrix { rows, scales: bank.scales.clone(), center_freqs: bank.center_freqs.clone(), fs: bank.fs })
}

/// Entrywise squared modulus.
pub fn power<T: Real>(z: &CwtMatrix<T>) -> Scalogram<T> {
    let power = z
        .rows
        .iter()
        .map(|row| row.iter().map(|c| c.re * c.re + c.im * c.im).collect())
        .collect();
    Scalogram { power, scales: z.scales.clone(), center_freqs: z.center_freqs.clone(), fs: z.fs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn bank(n: usize, fs: f64) -> FilterBank<f64> {
        default_filter_bank(n, fs).unwrap()
    }

    #[test]
    fn mother_wavelet_peaks_at_predicted_omega() {
        let beta = MORSE_TIME_BANDWIDTH / MORSE_GAMMA;
        let predicted = morse_peak_omega(MORSE_GAMMA, beta);
        // dense grid search as an independent oracle
        let mut best = (0.0f64, 0.0f64);
        let step = 1e-4;
        let mut omega = step;
        while omega < 4.0 {
            let v = morse_magnitude(MORSE_GAMMA, beta, omega);
            if v > best.1 {
                best = (omega, v);
            }
            omega += step;
        }
        assert!((best.0 - predicted).abs() <= step, "grid peak {} vs predicted {predicted}", best.0);
        // normalization: peak value 2
        assert!((best.1 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn bank_is_analytic_and_geometric() {
        let b = bank(2048, 22050.0);
        assert!(b.scales.windows(2).all(|w| w[1] > w[0]));
        assert!(b.center_freqs.windows(2).all(|w| w[1] < w[0]));
        for row in &b.wavelets {
            assert_eq!(row[0], 0.0);
            for &v in &row[2048 / 2 + 1..] {
                assert_eq!(v, 0.0);
            }
        }
        let ratio = 2f64.powf(1.0 / VOICES_PER_OCTAVE as f64);
        for w in b.center_freqs.windows(2) {
            assert!((w[0] / w[1] - ratio).abs() < 1e-12);
        }
        assert!(matches!(default_filter_bank::<f64>(16, 22050.0), Err(Error::TooShort { .. })));
    }

    #[test]
    fn cwt_zero_input_is_zero() {
        let b = bank(256, 8000.0);
        let z = cwt(&vec![0.0f64; 256], &b).unwrap();
        for row in &z.rows {
            assert!(row.iter().all(|c| c.re == 0.0 && c.im == 0.0));
        }
        let p = power(&z);
        assert!(p.power.iter().all(|row| row.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn cwt_rejects_length_mismatch() {
        let b = bank(256, 8000.0);
        assert!(matches!(cwt(&vec![0.0f64; 200], &b), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn impulse_response_peaks_at_impulse_column() {
        let n = 1024;
        let b = bank(n, 8000.0);
        let t0 = 400usize;
        let mut x = vec![0.0f64; n];
        x[t0] = 1.0;
        let z = cwt(&x, &b).unwrap();
        for (s, row) in z.rows.iter().enumerate() {
            let mut best = (0usize, -1.0f64);
            for (t, c) in row.iter().enumerate() {
                let mag = c.norm_sqr();
                if mag > best.1 {
                    best = (t, mag);
                }
            }
            let dist = best.0.abs_diff(t0).min(n - best.0.abs_diff(t0));
            assert!(dist <= 1, "scale {s}: peak at {} not {t0}", best.0);
        }
    }

    #[test]
    fn tone_lands_on_nearest_voice() {
        let fs = 22050.0;
        let n = 22050usize;
        let b = bank(n, fs);
        let freq = 440.0;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect();
        let sg = power(&cwt(&x, &b).unwrap());
        let row = sg.dominant_row();
        let found = sg.center_freqs[row];
        let voice = 2f64.powf(1.0 / VOICES_PER_OCTAVE as f64);
        assert!(
            found / freq < voice && freq / found < voice,
            "dominant row at {found} Hz vs tone {freq} Hz"
        );
    }

    #[test]
    fn cwt_is_linear() {
        let n = 512;
        let b = bank(n, 8000.0);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.11).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * 0.041).cos()).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 1.5 * a - 0.5 * b).collect();
        let zx = cwt(&x, &b).unwrap();
        let zy = cwt(&y, &b).unwrap();
        let zc = cwt(&combo, &b).unwrap();
        let mut peak = 0.0f64;
        for row in &zc.rows {
            for c in row {
                peak = peak.max(c.norm());
            }
        }
        for s in 0..zc.rows.len() {
            for t in 0..n {
                let lin = zx.rows[s][t] * 1.5 - zy.rows[s][t] * 0.5;
                assert!((zc.rows[s][t] - lin).norm() <= 1e-9 * peak);
            }
        }
    }

    #[test]
    fn circular_shift_covariance() {
        let n = 512;
        let b = bank(n, 8000.0);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.13).sin() * (i as f64 * 0.002).cos()).collect();
        let shift = 77usize;
        let shifted: Vec<f64> = (0..n).map(|i| x[(i + n - shift) % n]).collect();
        let z = cwt(&x, &b).unwrap();
        let zs = cwt(&shifted, &b).unwrap();
        let mut peak = 0.0f64;
        for row in &z.rows {
            for c in row {
                peak = peak.max(c.norm());
            }
        }
        for s in 0..z.rows.len() {
            for t in 0..n {
                let expected = z.rows[s][(t + n - shift) % n];
                assert!((zs.rows[s][t] - expected).norm() <= 1e-10 * peak);
            }
        }
    }

    #[test]
    fn power_scaling_and_parseval() {
        let n = 512;
        let b = bank(n, 8000.0);
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.21).sin()).collect();
        let doubled: Vec<f64> = x.iter().map(|v| v * 2.0).collect();
        let p1 = power(&cwt(&x, &b).unwrap());
        let p2 = power(&cwt(&doubled, &b).unwrap());
        let mut peak = 0.0f64;
        for row in &p2.power {
            for &v in row {
                peak = peak.max(v);
            }
        }
        for s in 0..p1.power.len() {
            for t in 0..n {
                assert!((p2.power[s][t] - 4.0 * p1.power[s][t]).abs() <= 1e-9 * peak);
            }
        }

        // impulse input: per-row total power equals per-row wavelet energy / n
        let mut imp = vec![0.0f64; n];
        imp[31] = 1.0;
        let p = power(&cwt(&imp, &b).unwrap());
        for (row, wavelet) in p.power.iter().zip(&b.wavelets) {
            let total: f64 = row.iter().sum();
            let energy: f64 = wavelet.iter().map(|&w| w * w).sum::<f64>() / n as f64;
            if energy > 0.0 {
                assert!((total - energy).abs() <= 1e-6 * energy, "row power {total} vs energy {energy}");
            }
        }
    }
}
