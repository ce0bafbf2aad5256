//! Bayesian regression: simple linear models, direction comparison, RESET
//! bootstrap tests, regressor transforms, and generalized linear models.

pub mod direction;
pub mod glm;
pub mod reset;
pub mod spline;

pub use direction::{compare_directions, DirectionReport, DirectionVerdict, Orientation};
pub use glm::{fit_bayes_lm, fit_bglm, fit_glm_design, BglmFit, Family, GlmSpec, Link, TermTransform};
pub use reset::{reset_bayes_bootstrap, ResetReport, ResetVariant};
pub use spline::{natural_spline_basis, SplineBasis, SplineError};

use crate::numeric::stats::{ols_with_intercept, sd, variance};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum RegressError {
    #[error("inputs must have equal length >= {need}, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("value {0} outside the transform domain (must be > 0)")]
    DomainError(f64),
    #[error("augmented design is rank deficient")]
    RankDeficiency,
    #[error("response outside the family support: {0}")]
    SupportError(String),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Sampler(#[from] crate::sampler::SamplerError),
    #[error(transparent)]
    Eval(#[from] crate::evalkit::EvalError),
}

/// Data-driven prior locations and scales, read off a frequentist pre-fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectivePriors {
    pub intercept_location: f64,
    pub intercept_scale: f64,
    /// Frequentist R² used to scale the coefficient priors.
    pub r2_location: f64,
    /// One scale per non-intercept coefficient.
    pub coefficient_scales: Vec<f64>,
}

impl ObjectivePriors {
    /// Derives priors from an ordinary least-squares fit of `y` on `columns`.
    /// The intercept prior sits at the frequentist intercept with scale
    /// `10 * sd(y)`; coefficient scales spread the frequentist R² over the
    /// predictors.
    pub fn from_frequentist(columns: &[&[f64]], y: &[f64]) -> Self {
        let fit = ols_with_intercept(columns, y);
        let var_y = variance(y).max(1e-12);
        let (intercept, r2) = match fit {
            Some(f) => {
                let tss = var_y * (y.len() as f64 - 1.0);
                let r2 = (1.0 - f.rss / tss).clamp(0.01, 0.99);
                (f.coefficients[0], r2)
            }
            None => (crate::numeric::stats::mean(y), 0.5),
        };
        let p = columns.len().max(1) as f64;
        let coefficient_scales = columns
            .iter()
            .map(|c| {
                let vx = variance(c).max(1e-12);
                (r2 * var_y / (p * vx)).sqrt().max(1e-6)
            })
            .collect();
        Self {
            intercept_location: intercept,
            intercept_scale: 10.0 * sd(y).max(1e-6),
            r2_location: r2,
            coefficient_scales,
        }
    }

    /// Widens every scale, approaching a flat prior.
    pub fn widened(&self, factor: f64) -> Self {
        Self {
            intercept_location: self.intercept_location,
            intercept_scale: self.intercept_scale * factor,
            r2_location: self.r2_location,
            coefficient_scales: self.coefficient_scales.iter().map(|s| s * factor).collect(),
        }
    }
}

/// Probability integral transform through a fitted Weibull CDF: maps positive
/// values into (0,1), strictly increasing.
pub fn weibull_transform(x: &[f64], shape: f64, scale: f64) -> Result<Vec<f64>, RegressError> {
    assert!(shape > 0.0 && scale > 0.0);
    x.iter()
        .map(|&v| {
            if v <= 0.0 {
                Err(RegressError::DomainError(v))
            } else {
                Ok(-((-(v / scale).powf(shape)).exp_m1()))
            }
        })
        .collect()
}

/// Inverse of [`weibull_transform`] (the fitted quantile function).
pub fn weibull_quantile(p: f64, shape: f64, scale: f64) -> f64 {
    scale * (-(-p).ln_1p()).powf(1.0 / shape)
}
