//! Empirical Mode Decomposition by envelope-mean sifting, and selection of
//! the IMF most correlated with its source segment.
//!
//! Sifting follows the classic recipe: subtract the mean of the upper and
//! lower natural-cubic-spline envelopes until the Cauchy-type SD criterion
//! `sum((h_prev - h)^2) / sum(h_prev^2) < 0.2` fires or 50 inner iterations
//! elapse. Envelope ends are stabilized by mirroring the two nearest extrema
//! across each end of the signal before fitting.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sifting stops when the normalized squared change drops below this.
pub const SIFT_SD_THRESHOLD: f64 = 0.2;
/// Hard cap on sifting iterations per IMF.
pub const MAX_SIFT_ITERATIONS: usize = 50;
/// Extra sifting iterations allowed only while the candidate still violates
/// the IMF extrema/zero-crossing property.
pub const SIFT_REPAIR_BUDGET: usize = 150;
/// Default number of IMFs extracted for the hybrid scalogram.
pub const DEFAULT_MAX_IMFS: usize = 9;

/// Ordered intrinsic mode functions plus the residual trend.
#[derive(Debug, Clone, PartialEq)]
pub struct ImfSet<T> {
    /// IMFs ordered fastest-oscillating first; each as long as the source.
    pub imfs: Vec<Vec<T>>,
    /// Monotonic or constant remainder.
    pub residue: Vec<T>,
    pub source_len: usize,
}

impl<T: Real> ImfSet<T> {
    pub fn len(&self) -> usize {
        self.imfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.imfs.is_empty()
    }

    /// `sum(imfs) + residue`, for reconstruction checks.
    pub fn reconstruct(&self) -> Vec<T> {
        let mut out = self.residue.clone();
        for imf in &self.imfs {
            for (o, &v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }
}

/// Strict local extrema of `x`; plateaus contribute their midpoint index and
/// endpoints are never reported.
pub fn find_extrema<T: Real>(x: &[T]) -> Result<(Vec<usize>, Vec<usize>)> {
    if x.len() < 3 {
        return Err(Error::TooShort { got: x.len(), need: 3 });
    }
    let mut maxima = Vec::new();
    let mut minima = Vec::new();

    let n = x.len();
    let mut run_start = 0usize;
    let mut i = 1usize;
    while i <= n {
        if i < n && x[i] == x[run_start] {
            i += 1;
            continue;
        }
        // run [run_start, i-1] of equal values ended
        let run_end = i - 1;
        if run_start > 0 && run_end < n - 1 {
            let prev = x[run_start - 1];
            let next = x[i];
            let mid = (run_start + run_end) / 2;
            if prev < x[run_start] && next < x[run_start] {
                maxima.push(mid);
            } else if prev > x[run_start] && next > x[run_start] {
                minima.push(mid);
            }
        }
        run_start = i;
        i += 1;
    }
    Ok((maxima, minima))
}

/// Zero crossings counted between consecutive nonzero samples, boundary
/// samples excluded.
pub fn count_zero_crossings<T: Real>(x: &[T]) -> usize {
    let mut crossings = 0usize;
    let mut last_sign = 0i8;
    for (i, &v) in x.iter().enumerate() {
        if i == 0 || i == x.len() - 1 {
            continue;
        }
        let sign = if v > T::zero() {
            1i8
        } else if v < T::zero() {
            -1i8
        } else {
            continue;
        };
        if last_sign != 0 && sign != last_sign {
            crossings += 1;
        }
        last_sign = sign;
    }
    crossings
}

/// `|#extrema - #zero crossings|` with boundary samples excluded; at most 1
/// for a well-formed IMF.
pub fn imf_defect<T: Real>(x: &[T]) -> usize {
    let (maxima, minima) = match find_extrema(x) {
        Ok(e) => e,
        Err(_) => return 0,
    };
    let extrema = maxima.len() + minima.len();
    let zc = count_zero_crossings(x);
    extrema.abs_diff(zc)
}

/// Natural cubic spline through `(xs[i], ys[i])`, evaluated at `0..n`.
///
/// Knot positions must be strictly increasing and bracket `[0, n-1]`.
fn spline_eval<T: Real>(xs: &[f64], ys: &[T], n: usize) -> Vec<T> {
    let k = xs.len();
    debug_assert!(k >= 3);

    // second derivatives via the standard tridiagonal solve, natural ends
    let mut mu = vec![T::zero(); k];
    let mut z = vec![T::zero(); k];
    let h: Vec<T> = (0..k - 1).map(|i| T::of(xs[i + 1] - xs[i])).collect();
    for i in 1..k - 1 {
        let alpha = T::of(3.0) * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        let l = T::of(2.0 * (xs[i + 1] - xs[i - 1])) - h[i - 1] * mu[i - 1];
        mu[i] = h[i] / l;
        z[i] = (alpha - h[i - 1] * z[i - 1]) / l;
    }
    let mut c = vec![T::zero(); k];
    for i in (1..k - 1).rev() {
        c[i] = z[i] - mu[i] * c[i + 1];
    }

    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    for t in 0..n {
        let x = t as f64;
        while seg + 2 < k && x > xs[seg + 1] {
            seg += 1;
        }
        let dx = T::of(x - xs[seg]);
        let hs = h[seg];
        let b = (ys[seg + 1] - ys[seg]) / hs - hs * (c[seg + 1] + T::of(2.0) * c[seg]) / T::of(3.0);
        let d = (c[seg + 1] - c[seg]) / (T::of(3.0) * hs);
        out.push(ys[seg] + dx * (b + dx * (c[seg] + dx * d)));
    }
    out
}

/// Envelope through the given extrema, evaluated at every sample of `x`.
///
/// With exactly two extrema the envelope degenerates to the line through
/// them; otherwise the two nearest extrema are mirrored across each end
/// before fitting the natural cubic spline.
pub fn envelope<T: Real>(x: &[T], extrema: &[usize]) -> Result<Vec<T>> {
    if extrema.len() < 2 {
        return Err(Error::InsufficientExtrema(extrema.len()));
    }
    let n = x.len();

    if extrema.len() == 2 {
        let (x0, x1) = (extrema[0] as f64, extrema[1] as f64);
        let (y0, y1) = (x[extrema[0]], x[extrema[1]]);
        let slope = (y1 - y0) / T::of(x1 - x0);
        return Ok((0..n).map(|t| y0 + slope * T::of(t as f64 - x0)).collect());
    }

    let m = (n - 1) as f64;
    let mut xs: Vec<f64> = Vec::with_capacity(extrema.len() + 4);
    let mut ys: Vec<T> = Vec::with_capacity(extrema.len() + 4);

    let (i0, i1) = (extrema[0], extrema[1]);
    let (ik, ik1) = (extrema[extrema.len() - 1], extrema[extrema.len() - 2]);
    // mirror across the left end (position 0)
    for &idx in &[i1, i0] {
        let mirrored = -(idx as f64);
        if mirrored < extrema[0] as f64 && (xs.is_empty() || mirrored > *xs.last().unwrap()) {
            xs.push(mirrored);
            ys.push(x[idx]);
        }
    }
    for &idx in extrema {
        xs.push(idx as f64);
        ys.push(x[idx]);
    }
    // mirror across the right end (position n-1)
    for &idx in &[ik, ik1] {
        let mirrored = 2.0 * m - idx as f64;
        if mirrored > *xs.last().unwrap() {
            xs.push(mirrored);
            ys.push(x[idx]);
        }
    }

    Ok(spline_eval(&xs, &ys, n))
}

/// Classic EMD sifting, extracting at most `max_imfs` modes.
pub fn decompose<T: Real>(x: &[T], max_imfs: usize) -> Result<ImfSet<T>> {
    if x.len() < 16 {
        return Err(Error::TooShort { got: x.len(), need: 16 });
    }
    let n = x.len();
    let mut residue: Vec<T> = x.to_vec();
    let mut imfs: Vec<Vec<T>> = Vec::new();

    while imfs.len() < max_imfs {
        let (maxima, minima) = find_extrema(&residue)?;
        if maxima.len() < 2 || minima.len() < 2 {
            break;
        }

        let mut h = residue.clone();
        for iteration in 0..(MAX_SIFT_ITERATIONS + SIFT_REPAIR_BUDGET) {
            let (mx, mn) = find_extrema(&h)?;
            if mx.len() < 2 || mn.len() < 2 {
                break;
            }
            let well_formed = imf_defect(&h) <= 1;
            // past the nominal budget only ill-formed candidates keep sifting
            if iteration >= MAX_SIFT_ITERATIONS && well_formed {
                break;
            }
            let upper = envelope(&h, &mx)?;
            let lower = envelope(&h, &mn)?;

            let mut num = T::zero();
            let mut den = T::zero();
            let half = T::of(0.5);
            for i in 0..n {
                let mean = (upper[i] + lower[i]) * half;
                num += mean * mean; // (h_prev - h_new) == mean
                den += h[i] * h[i];
                h[i] -= mean;
            }
            if den == T::zero() {
                break;
            }
            // the SD criterion only stops once the iterate is a well-formed
            // IMF (extrema and zero-crossing counts differ by at most one)
            if num / den < T::of(SIFT_SD_THRESHOLD) && imf_defect(&h) <= 1 {
                break;
            }
        }

        // a candidate that stays ill-formed after the repair budget marks a
        // sifting fixed point; it remains in the residue and extraction ends
        if imf_defect(&h) > 1 {
            break;
        }

        for i in 0..n {
            residue[i] -= h[i];
        }
        imfs.push(h);
    }

    Ok(ImfSet { imfs, residue, source_len: n })
}

/// Zero-lag Pearson correlation; zero when either side has no variance.
fn pearson<T: Real>(a: &[T], b: &[T]) -> T {
    let n = T::of_usize(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let mut cov = T::zero();
    let mut va = T::zero();
    let mut vb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == T::zero() || vb == T::zero() {
        return T::zero();
    }
    cov / (va * vb).sqrt()
}

/// Index (zero-based) of the IMF with the largest `|pearson(x, imf)|` at zero
/// lag, ties broken toward the smaller index, plus the signed coefficient.
pub fn select_max_correlated_imf<T: Real>(x: &[T], set: &ImfSet<T>) -> Result<(usize, T)> {
    if set.is_empty() {
        return Err(Error::EmptyImfSet);
    }
    let mut best_idx = 0usize;
    let mut best_coeff = T::zero();
    for (i, imf) in set.imfs.iter().enumerate() {
        let r = pearson(x, imf);
        if r.abs() > best_coeff.abs() {
            best_idx = i;
            best_coeff = r;
        }
    }
    if best_coeff == T::zero() {
        // all correlations vanish; the tie rule picks the first IMF
        best_coeff = pearson(x, &set.imfs[0]);
    }
    Ok((best_idx, best_coeff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn extrema_basic() {
        let (mx, mn) = find_extrema(&[0.0f64, 1.0, 0.0]).unwrap();
        assert_eq!(mx, vec![1]);
        assert!(mn.is_empty());

        let ramp: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (mx, mn) = find_extrema(&ramp).unwrap();
        assert!(mx.is_empty() && mn.is_empty());

        assert!(matches!(find_extrema(&[0.0f64, 1.0]), Err(Error::TooShort { .. })));
    }

    #[test]
    fn extrema_plateau_midpoint() {
        let x = [0.0f64, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0];
        let (mx, mn) = find_extrema(&x).unwrap();
        assert_eq!(mx, vec![3]);
        assert!(mn.is_empty());

        // plateau touching an endpoint is not an extremum
        let x = [2.0f64, 2.0, 1.0, 0.0];
        let (mx, mn) = find_extrema(&x).unwrap();
        assert!(mx.is_empty() && mn.is_empty());
    }

    #[test]
    fn extrema_of_sine_sit_at_quarter_periods() {
        let period = 1000usize;
        let n = 3 * period;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / period as f64).sin()).collect();
        let (mx, mn) = find_extrema(&x).unwrap();
        assert_eq!(mx.len(), 3);
        assert_eq!(mn.len(), 3);
        for (k, &idx) in mx.iter().enumerate() {
            let expected = period / 4 + k * period;
            assert!(idx.abs_diff(expected) <= 1, "max {idx} vs expected {expected}");
        }
        for (k, &idx) in mn.iter().enumerate() {
            let expected = 3 * period / 4 + k * period;
            assert!(idx.abs_diff(expected) <= 1, "min {idx} vs expected {expected}");
        }
    }

    #[test]
    fn zero_crossings_of_sine() {
        let period = 100usize;
        let x: Vec<f64> = (0..3 * period).map(|i| (2.0 * PI * i as f64 / period as f64).sin()).collect();
        // crossings at every half period, minus the excluded boundaries
        let zc = count_zero_crossings(&x);
        assert!((4..=6).contains(&zc), "zc = {zc}");
    }

    #[test]
    fn envelope_constant_knots_is_constant() {
        let x = vec![0.0f64, 3.0, 0.0, 3.0, 0.0, 3.0, 0.0, 3.0, 0.0];
        let env = envelope(&x, &[1, 3, 5, 7]).unwrap();
        for &v in &env {
            assert!((v - 3.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn envelope_two_extrema_is_linear() {
        let x = vec![0.0f64, 1.0, 0.0, 2.0, 0.0];
        let env = envelope(&x, &[1, 3]).unwrap();
        for (t, &v) in env.iter().enumerate() {
            let expected = 1.0 + (t as f64 - 1.0) * 0.5;
            assert!((v - expected).abs() < 1e-12);
        }
        assert!(matches!(envelope(&x, &[1]), Err(Error::InsufficientExtrema(1))));
    }

    #[test]
    fn envelope_of_sine_maxima_hugs_one() {
        let period = 200usize;
        let n = 6 * period;
        let x: Vec<f64> = (0..n).map(|i| (2.0 * PI * i as f64 / period as f64).sin()).collect();
        let (mx, _) = find_extrema(&x).unwrap();
        let env = envelope(&x, &mx).unwrap();
        for &v in &env[period / 4..n - period / 4] {
            assert!(v >= 1.0 - 0.01, "envelope dipped to {v}");
        }
    }

    #[test]
    fn decompose_zero_and_monotone() {
        let zeros = vec![0.0f64; 64];
        let set = decompose(&zeros, 9).unwrap();
        assert!(set.imfs.is_empty());
        assert!(set.residue.iter().all(|&v| v == 0.0));

        let ramp: Vec<f64> = (0..64).map(|i| i as f64 * 0.1).collect();
        let set = decompose(&ramp, 9).unwrap();
        assert!(set.imfs.is_empty());
        assert_eq!(set.residue, ramp);

        assert!(matches!(decompose(&[0.0f64; 8], 9), Err(Error::TooShort { .. })));
    }

    #[test]
    fn decompose_separates_two_tones() {
        let fs = 22050.0;
        let n = 22050usize;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 300.0 * t).sin() + (2.0 * PI * 30.0 * t).sin()
            })
            .collect();
        let set = decompose(&x, 9).unwrap();
        assert!(set.len() >= 2);

        let hi: Vec<f64> = (0..n).map(|i| (2.0 * PI * 300.0 * i as f64 / fs).sin()).collect();
        let lo: Vec<f64> = (0..n).map(|i| (2.0 * PI * 30.0 * i as f64 / fs).sin()).collect();
        let r_hi = pearson(&set.imfs[0], &hi);
        let r_lo = pearson(&set.imfs[1], &lo);
        assert!(r_hi > 0.95, "IMF1 vs 300 Hz correlation {r_hi}");
        assert!(r_lo > 0.95, "IMF2 vs 30 Hz correlation {r_lo}");
    }

    #[test]
    fn reconstruction_and_imf_defect_on_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let x: Vec<f64> = (0..2048).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let set = decompose(&x, 9).unwrap();
            let rec = set.reconstruct();
            let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in x.iter().zip(&rec) {
                assert!((a - b).abs() <= 1e-8 * peak);
            }
            for imf in &set.imfs {
                assert!(imf_defect(imf) <= 1, "defect {}", imf_defect(imf));
            }
        }
    }

    #[test]
    fn spectral_ordering_on_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4096).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let set = decompose(&x, 9).unwrap();
        let rates: Vec<f64> =
            set.imfs.iter().map(|imf| count_zero_crossings(imf) as f64 / imf.len() as f64).collect();
        let violations = rates.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(
            violations * 20 <= rates.len().max(1),
            "zero-crossing rate not ordered: {rates:?}"
        );
    }

    #[test]
    fn selection_picks_identical_imf() {
        let x: Vec<f64> = (0..128).map(|i| (i as f64 * 0.3).sin()).collect();
        let other: Vec<f64> = (0..128).map(|i| (i as f64 * 1.1).cos()).collect();
        let set = ImfSet { imfs: vec![other, x.clone()], residue: vec![0.0; 128], source_len: 128 };
        let (idx, coeff) = select_max_correlated_imf(&x, &set).unwrap();
        assert_eq!(idx, 1); // the second IMF is the signal itself
        assert!((coeff - 1.0).abs() < 1e-12);
    }

    #[test]
    fn selection_tie_goes_to_smallest_index() {
        let x = vec![1.0f64; 64];
        // constant signal has zero variance against every IMF
        let set = ImfSet {
            imfs: vec![
                (0..64).map(|i| (i as f64 * 0.7).sin()).collect(),
                (0..64).map(|i| (i as f64 * 0.4).cos()).collect(),
            ],
            residue: vec![0.0; 64],
            source_len: 64,
        };
        let (idx, coeff) = select_max_correlated_imf(&x, &set).unwrap();
        assert_eq!(idx, 0);
        assert_eq!(coeff, 0.0);

        let empty: ImfSet<f64> = ImfSet { imfs: vec![], residue: vec![0.0; 4], source_len: 4 };
        assert!(matches!(select_max_correlated_imf(&x, &empty), Err(Error::EmptyImfSet)));
    }

    #[test]
    fn selection_invariant_under_positive_rescale() {
        let fs = 8000.0;
        let x: Vec<f64> = (0..4000)
            .map(|i| {
                let t = i as f64 / fs;
                (2.0 * PI * 400.0 * t).sin() + 0.4 * (2.0 * PI * 40.0 * t).sin()
            })
            .collect();
        let set = decompose(&x, 9).unwrap();
        let (idx_a, coeff_a) = select_max_correlated_imf(&x, &set).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * 7.5).collect();
        let (idx_b, coeff_b) = select_max_correlated_imf(&scaled, &set).unwrap();
        assert_eq!(idx_a, idx_b);
        assert!((coeff_a - coeff_b).abs() < 1e-9);
    }
}
