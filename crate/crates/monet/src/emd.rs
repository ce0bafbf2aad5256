//! Empirical mode decomposition by envelope sifting.
//!
//! Cubic-spline envelopes with mirrored boundary extension; the sift stops on
//! the standard-deviation criterion. The residue plus all intrinsic mode
//! functions reconstructs the input exactly (sifting only ever subtracts).

use crate::numeric::cubic::NaturalCubic;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum EmdError {
    #[error("series too short for decomposition: {0} points (need at least 8)")]
    TooShort(usize),
    #[error("sifting did not converge within {0} iterations")]
    Convergence(usize),
}

/// Intrinsic mode functions plus the trend residue.
#[derive(Debug, Clone)]
pub struct EmdResult {
    pub imfs: Vec<Vec<f64>>,
    pub residue: Vec<f64>,
}

impl EmdResult {
    /// Sum of all IMFs plus the residue, which must equal the input.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.residue.clone();
        for imf in &self.imfs {
            for (o, v) in out.iter_mut().zip(imf) {
                *o += v;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EmdOptions {
    pub max_imfs: usize,
    /// Standard-deviation sift threshold.
    pub sift_tolerance: f64,
    pub max_sift_iterations: usize,
}

impl Default for EmdOptions {
    fn default() -> Self {
        Self { max_imfs: 10, sift_tolerance: 0.2, max_sift_iterations: 500 }
    }
}

fn local_extrema(x: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    for i in 1..x.len() - 1 {
        if x[i] > x[i - 1] && x[i] >= x[i + 1] {
            maxima.push(i);
        } else if x[i] < x[i - 1] && x[i] <= x[i + 1] {
            minima.push(i);
        }
    }
    (maxima, minima)
}

fn zero_crossings(x: &[f64]) -> usize {
    x.windows(2).filter(|w| (w[0] > 0.0 && w[1] < 0.0) || (w[0] < 0.0 && w[1] > 0.0)).count()
}

/// Envelope through the given extrema, mirrored at both ends so the spline is
/// defined over the full index range.
fn envelope(x: &[f64], extrema: &[usize]) -> Vec<f64> {
    let n = x.len();
    debug_assert!(extrema.len() >= 2);
    let mirror = 2.min(extrema.len());
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    // mirror leading extrema across index 0
    for &e in extrema.iter().take(mirror).rev() {
        if e > 0 {
            ts.push(-(e as f64));
            vs.push(x[e]);
        }
    }
    for &e in extrema {
        ts.push(e as f64);
        vs.push(x[e]);
    }
    // mirror trailing extrema across the last index
    let last = (n - 1) as f64;
    for &e in extrema.iter().rev().take(mirror) {
        if e < n - 1 {
            ts.push(2.0 * last - e as f64);
            vs.push(x[e]);
        }
    }
    // mirroring can produce coincident abscissae; drop duplicates
    let mut pairs: Vec<(f64, f64)> = ts.into_iter().zip(vs).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.dedup_by(|a, b| a.0 == b.0);
    let (ts, vs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let spline = NaturalCubic::fit(&ts, &vs);
    (0..n).map(|i| spline.eval(i as f64)).collect()
}

fn is_monotone_or_trivial(x: &[f64]) -> bool {
    let (maxima, minima) = local_extrema(x);
    maxima.len() + minima.len() < 2
}

/// Decomposes `series` into IMFs and a residue trend.
pub fn emd_trend(series: &[f64], opts: &EmdOptions) -> Result<EmdResult, EmdError> {
    if series.len() < 8 {
        return Err(EmdError::TooShort(series.len()));
    }
    let mut residue = series.to_vec();
    let mut imfs = Vec::new();

    while imfs.len() < opts.max_imfs && !is_monotone_or_trivial(&residue) {
        let mut h = residue.clone();
        let mut converged = false;
        for _ in 0..opts.max_sift_iterations {
            let (maxima, minima) = local_extrema(&h);
            if maxima.len() < 2 || minima.len() < 2 {
                converged = true;
                break;
            }
            let upper = envelope(&h, &maxima);
            let lower = envelope(&h, &minima);
            let mut sd = 0.0;
            let mut next = h.clone();
            for i in 0..h.len() {
                let m = 0.5 * (upper[i] + lower[i]);
                next[i] = h[i] - m;
                sd += (m * m) / (h[i] * h[i] + 1e-12);
            }
            let done = sd < opts.sift_tolerance;
            h = next;
            if done {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(EmdError::Convergence(opts.max_sift_iterations));
        }
        let (maxima, minima) = local_extrema(&h);
        if maxima.len() + minima.len() < 2 {
            // nothing oscillatory left; fold back into the residue
            break;
        }
        for (r, v) in residue.iter_mut().zip(&h) {
            *r -= v;
        }
        imfs.push(h);
    }

    Ok(EmdResult { imfs, residue })
}

/// IMF sanity statistics: extrema count, zero crossings.
pub fn imf_counts(imf: &[f64]) -> (usize, usize) {
    let (maxima, minima) = local_extrema(imf);
    (maxima.len() + minima.len(), zero_crossings(imf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::stats::pearson;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pure_sine_yields_single_dominant_imf() {
        let n = 512;
        let signal: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 8.0 * i as f64 / n as f64).sin())
            .collect();
        let result = emd_trend(&signal, &EmdOptions::default()).unwrap();
        assert!(!result.imfs.is_empty());
        let corr = pearson(&result.imfs[0], &signal);
        assert!(corr > 0.99, "first IMF correlation {corr}");
        let residue_amp = result
            .residue
            .iter()
            .zip(result.imfs.iter().skip(1).fold(vec![0.0; n], |mut acc, imf| {
                for (a, v) in acc.iter_mut().zip(imf) {
                    *a += v;
                }
                acc
            }))
            .map(|(r, rest)| (r + rest).abs())
            .fold(0.0f64, f64::max);
        assert!(residue_amp < 0.15, "leftover amplitude {residue_amp}");
    }

    #[test]
    fn reconstruction_identity_random_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let signal: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let result = emd_trend(&signal, &EmdOptions::default()).unwrap();
        for (a, b) in result.reconstruct().iter().zip(&signal) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn monotone_ramp_has_no_imfs() {
        let signal: Vec<f64> = (0..64).map(|i| i as f64 * 0.5).collect();
        let result = emd_trend(&signal, &EmdOptions::default()).unwrap();
        assert!(result.imfs.is_empty());
        assert_eq!(result.residue, signal);
    }

    #[test]
    fn imf_extrema_and_zero_crossings_are_balanced() {
        let n = 512;
        let signal: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64;
                (2.0 * std::f64::consts::PI * 10.0 * t).sin() + 0.5 * (2.0 * std::f64::consts::PI * 2.0 * t).sin()
            })
            .collect();
        let result = emd_trend(&signal, &EmdOptions::default()).unwrap();
        assert!(result.imfs.len() >= 2);
        let (extrema, crossings) = imf_counts(&result.imfs[0]);
        let diff = extrema as i64 - crossings as i64;
        assert!(diff.abs() <= 2, "extrema {extrema} vs crossings {crossings}");
    }

    #[test]
    fn too_short_rejected() {
        assert!(matches!(emd_trend(&[1.0; 5], &EmdOptions::default()), Err(EmdError::TooShort(5))));
    }
}
