//! Candidate distribution fitting (Normal, LogNormal, Gamma, Weibull) by
//! maximum likelihood or Cramér–von Mises distance minimization, with BIC
//! model selection.

use crate::numeric::neldermead::{minimize, NmOptions};
use crate::numeric::stats::{mean, variance};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, LogNormal, Normal, Weibull};
use std::fmt;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum DistFitError {
    #[error("sample too small: {0} observations (need at least 8)")]
    TooSmall(usize),
    #[error("value {value} outside the support of {family}")]
    Support { family: DistFamily, value: f64 },
    #[error("optimizer failed to produce a finite fit for {0}")]
    OptimFail(DistFamily),
    #[error("no candidate family's support contains the sample")]
    NoFeasibleFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistFamily {
    Gamma,
    LogNormal,
    Normal,
    Weibull,
}

impl DistFamily {
    pub const ALL: [DistFamily; 4] =
        [DistFamily::Gamma, DistFamily::LogNormal, DistFamily::Normal, DistFamily::Weibull];

    /// Whether every sample value lies in the family's support.
    pub fn supports(self, sample: &[f64]) -> bool {
        match self {
            DistFamily::Normal => true,
            _ => sample.iter().all(|&v| v > 0.0),
        }
    }
}

impl fmt::Display for DistFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DistFamily::Gamma => "Gamma",
            DistFamily::LogNormal => "Log-normal",
            DistFamily::Normal => "Normal",
            DistFamily::Weibull => "Weibull",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    /// Maximum likelihood.
    Mle,
    /// Maximum goodness of fit: Cramér–von Mises distance minimization,
    /// started from the MLE.
    Mge,
}

/// Fitted two-parameter family. Parameter meaning by family:
/// Normal location/scale, LogNormal log-location/log-scale, Gamma shape/rate,
/// Weibull shape/scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub family: DistFamily,
    pub param1: f64,
    pub param2: f64,
    pub log_lik: f64,
    pub bic: f64,
    pub n: usize,
    pub method: FitMethod,
}

impl FitResult {
    pub fn cdf(&self, x: f64) -> f64 {
        family_cdf(self.family, self.param1, self.param2, x)
    }
}

fn family_ln_pdf(family: DistFamily, p1: f64, p2: f64, x: f64) -> f64 {
    match family {
        DistFamily::Normal => match Normal::new(p1, p2) {
            Ok(d) => d.ln_pdf(x),
            Err(_) => f64::NEG_INFINITY,
        },
        DistFamily::LogNormal => match LogNormal::new(p1, p2) {
            Ok(d) => {
                if x > 0.0 {
                    d.ln_pdf(x)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        },
        DistFamily::Gamma => match Gamma::new(p1, p2) {
            Ok(d) => {
                if x > 0.0 {
                    d.ln_pdf(x)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        },
        DistFamily::Weibull => match Weibull::new(p1, p2) {
            Ok(d) => {
                if x > 0.0 {
                    d.ln_pdf(x)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        },
    }
}

pub fn family_cdf(family: DistFamily, p1: f64, p2: f64, x: f64) -> f64 {
    match family {
        DistFamily::Normal => Normal::new(p1, p2).map(|d| d.cdf(x)).unwrap_or(f64::NAN),
        DistFamily::LogNormal => LogNormal::new(p1, p2).map(|d| d.cdf(x)).unwrap_or(f64::NAN),
        DistFamily::Gamma => Gamma::new(p1, p2).map(|d| d.cdf(x)).unwrap_or(f64::NAN),
        DistFamily::Weibull => Weibull::new(p1, p2).map(|d| d.cdf(x)).unwrap_or(f64::NAN),
    }
}

pub fn log_likelihood(family: DistFamily, p1: f64, p2: f64, sample: &[f64]) -> f64 {
    sample.iter().map(|&x| family_ln_pdf(family, p1, p2, x)).sum()
}

/// Moment-matching starting values on the natural parameter scale.
fn moment_start(family: DistFamily, sample: &[f64]) -> (f64, f64) {
    let m = mean(sample);
    let v = variance(sample).max(1e-12);
    match family {
        DistFamily::Normal => (m, v.sqrt()),
        DistFamily::LogNormal => {
            let logs: Vec<f64> = sample.iter().map(|x| x.ln()).collect();
            (mean(&logs), variance(&logs).max(1e-12).sqrt())
        }
        DistFamily::Gamma => {
            let shape = (m * m / v).max(1e-3);
            (shape, (shape / m).max(1e-8))
        }
        DistFamily::Weibull => {
            // rough shape from the coefficient of variation, scale from the mean
            let cv = v.sqrt() / m;
            let shape = (cv.powf(-1.086)).clamp(0.05, 200.0);
            (shape, m.max(1e-8))
        }
    }
}

/// Cramér–von Mises distance between the empirical CDF and the fitted CDF.
fn cvm_distance(family: DistFamily, p1: f64, p2: f64, sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut acc = 1.0 / (12.0 * n);
    for (i, &x) in sorted.iter().enumerate() {
        let f = family_cdf(family, p1, p2, x);
        if !f.is_finite() {
            return f64::INFINITY;
        }
        let e = (2.0 * (i as f64 + 1.0) - 1.0) / (2.0 * n);
        acc += (f - e) * (f - e);
    }
    acc
}

fn optimize_params<F: FnMut(f64, f64) -> f64>(
    start: (f64, f64),
    closed_form_p1: Option<f64>,
    mut objective: F,
) -> (f64, f64, bool) {
    // positive parameters are optimized on the log scale; Normal/LogNormal
    // locations stay on the natural scale
    let loc_free = closed_form_p1.is_none();
    let _ = loc_free;
    let x0 = [start.0.abs().max(1e-12).ln(), start.1.abs().max(1e-12).ln()];
    let r = minimize(
        |x| objective(x[0].exp(), x[1].exp()),
        &x0,
        &NmOptions { max_iter: 4000, tol: 1e-10, initial_step: 0.2 },
    );
    (r.x[0].exp(), r.x[1].exp(), r.converged)
}

/// Fits one family to the sample.
pub fn fit_family(
    sample: &[f64],
    family: DistFamily,
    method: FitMethod,
) -> Result<FitResult, DistFitError> {
    let n = sample.len();
    if n < 8 {
        return Err(DistFitError::TooSmall(n));
    }
    if !family.supports(sample) {
        let bad = sample.iter().copied().find(|&v| !(v > 0.0)).unwrap_or(f64::NAN);
        return Err(DistFitError::Support { family, value: bad });
    }

    let mle = match family {
        DistFamily::Normal => {
            let m = mean(sample);
            let s2 = sample.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            (m, s2.sqrt())
        }
        DistFamily::LogNormal => {
            let logs: Vec<f64> = sample.iter().map(|x| x.ln()).collect();
            let m = mean(&logs);
            let s2 = logs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            (m, s2.sqrt())
        }
        DistFamily::Gamma | DistFamily::Weibull => {
            let start = moment_start(family, sample);
            let (p1, p2, ok) =
                optimize_params(start, None, |a, b| -log_likelihood(family, a, b, sample));
            if ok && p1.is_finite() && p2.is_finite() {
                (p1, p2)
            } else {
                // single restart from moments
                let (p1, p2, ok2) =
                    optimize_params((start.0 * 1.5, start.1 * 0.7), None, |a, b| {
                        -log_likelihood(family, a, b, sample)
                    });
                if !ok2 || !p1.is_finite() || !p2.is_finite() {
                    return Err(DistFitError::OptimFail(family));
                }
                (p1, p2)
            }
        }
    };

    let (param1, param2) = match method {
        FitMethod::Mle => mle,
        FitMethod::Mge => {
            let mut sorted = sample.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            match family {
                DistFamily::Normal | DistFamily::LogNormal => {
                    // location may be negative; optimize (location, log scale)
                    let x0 = [mle.0, mle.1.max(1e-12).ln()];
                    let r = minimize(
                        |x| cvm_distance(family, x[0], x[1].exp(), &sorted),
                        &x0,
                        &NmOptions { max_iter: 4000, tol: 1e-10, initial_step: 0.2 },
                    );
                    (r.x[0], r.x[1].exp())
                }
                _ => {
                    let (p1, p2, _) =
                        optimize_params(mle, None, |a, b| cvm_distance(family, a, b, &sorted));
                    (p1, p2)
                }
            }
        }
    };

    if !param1.is_finite() || !param2.is_finite() || param2 <= 0.0 {
        return Err(DistFitError::OptimFail(family));
    }
    let log_lik = log_likelihood(family, param1, param2, sample);
    if !log_lik.is_finite() {
        return Err(DistFitError::OptimFail(family));
    }
    // two-parameter families throughout: k = 2
    let bic = 2.0 * (n as f64).ln() - 2.0 * log_lik;
    Ok(FitResult { family, param1, param2, log_lik, bic, n, method })
}

/// Fits every feasible family and returns results ordered by ascending BIC,
/// ties broken alphabetically by family name.
pub fn select_distribution(
    sample: &[f64],
    families: &[DistFamily],
    method: FitMethod,
) -> Result<Vec<FitResult>, DistFitError> {
    let mut fits = Vec::new();
    for &family in families {
        if !family.supports(sample) {
            continue; // skipped with a note at the call site
        }
        if let Ok(fit) = fit_family(sample, family, method) {
            fits.push(fit);
        }
    }
    if fits.is_empty() {
        return Err(DistFitError::NoFeasibleFamily);
    }
    fits.sort_by(|a, b| {
        a.bic
            .partial_cmp(&b.bic)
            .unwrap()
            .then_with(|| a.family.to_string().cmp(&b.family.to_string()))
    });
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    #[test]
    fn normal_mle_closed_form() {
        let sample: Vec<f64> = vec![-1.0, 0.0, 1.0, -1.0, 0.0, 1.0, -1.0, 0.0, 1.0];
        let fit = fit_family(&sample, DistFamily::Normal, FitMethod::Mle).unwrap();
        assert_relative_eq!(fit.param1, 0.0, epsilon = 1e-12);
        assert_relative_eq!(fit.param2, (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(fit.bic, 2.0 * (9.0f64).ln() - 2.0 * fit.log_lik, epsilon = 1e-12);
    }

    #[test]
    fn weibull_recovery_from_large_sample() {
        // truth from the US log(Prices) fit reported by the source tables
        let (shape, scale) = (6.25, 7.65);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let d = rand_distr::Weibull::new(scale, shape).unwrap();
        let sample: Vec<f64> = (0..5000).map(|_| d.sample(&mut rng)).collect();
        for method in [FitMethod::Mle, FitMethod::Mge] {
            let fit = fit_family(&sample, DistFamily::Weibull, method).unwrap();
            assert!((fit.param1 - shape).abs() / shape < 0.05, "shape {}", fit.param1);
            assert!((fit.param2 - scale).abs() / scale < 0.05, "scale {}", fit.param2);
        }
    }

    #[test]
    fn mle_is_locally_optimal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let d = rand_distr::Gamma::new(3.0, 0.5).unwrap();
        let sample: Vec<f64> = (0..500).map(|_| d.sample(&mut rng)).collect();
        for family in [DistFamily::Gamma, DistFamily::Weibull, DistFamily::Normal] {
            let fit = fit_family(&sample, family, FitMethod::Mle).unwrap();
            for (da, db) in [(1.01, 1.0), (0.99, 1.0), (1.0, 1.01), (1.0, 0.99)] {
                let ll = log_likelihood(family, fit.param1 * da, fit.param2 * db, &sample);
                assert!(ll <= fit.log_lik + 1e-6, "{family}: {ll} > {}", fit.log_lik);
            }
        }
    }

    #[test]
    fn fitted_cdf_is_monotone() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let d = rand_distr::LogNormal::new(1.0, 0.4).unwrap();
        let sample: Vec<f64> = (0..300).map(|_| d.sample(&mut rng)).collect();
        let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for family in DistFamily::ALL {
            let fit = fit_family(&sample, family, FitMethod::Mge).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..1000 {
                let x = lo + (hi - lo) * i as f64 / 999.0;
                let f = fit.cdf(x);
                assert!(f >= prev - 1e-12);
                prev = f;
            }
        }
    }

    #[test]
    fn selection_prefers_true_family() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut wins = 0;
        for _ in 0..100 {
            let d = rand_distr::Normal::new(10.0, 1.0).unwrap();
            let sample: Vec<f64> = (0..2000).map(|_| d.sample(&mut rng)).collect();
            let ranked = select_distribution(&sample, &DistFamily::ALL, FitMethod::Mle).unwrap();
            if ranked[0].family == DistFamily::Normal {
                wins += 1;
            }
        }
        assert!(wins >= 90, "Normal selected in only {wins}/100 runs");
    }

    #[test]
    fn negative_values_skip_positive_families() {
        let sample: Vec<f64> = (0..50).map(|i| i as f64 - 25.0).collect();
        assert!(fit_family(&sample, DistFamily::Gamma, FitMethod::Mle).is_err());
        let ranked = select_distribution(&sample, &DistFamily::ALL, FitMethod::Mle).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].family, DistFamily::Normal);
    }

    #[test]
    fn too_small_sample_rejected() {
        assert!(matches!(
            fit_family(&[1.0, 2.0, 3.0], DistFamily::Normal, FitMethod::Mle),
            Err(DistFitError::TooSmall(3))
        ));
    }
}
