//! Bayesian (generalized) linear models sampled with the HMC engine.
//!
//! The linear predictor is built over transformed terms; the coefficient
//! block carries data-driven normal priors and the dispersion parameter is
//! sampled on the log scale. Pointwise log likelihoods are recorded for LOO.

use super::{natural_spline_basis, weibull_transform, ObjectivePriors, RegressError};
use crate::dataset::{CountryDataset, Variable};
use crate::numeric::stats::{mean, weighted_least_squares};
use crate::sampler::{check_gradient, sample_hmc, ChainConfig, PosteriorDraws, TargetDensity};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Gaussian,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Identity,
    Log,
}

/// One regressor term built from a dataset variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TermTransform {
    Raw(Variable),
    Log(Variable),
    Spline { variable: Variable, df: usize },
    WeibullTransform { variable: Variable, shape: f64, scale: f64 },
}

impl TermTransform {
    pub fn label(&self) -> String {
        match self {
            TermTransform::Raw(v) => format!("{v}"),
            TermTransform::Log(v) => format!("log({v})"),
            TermTransform::Spline { variable, df } => format!("ns({variable}, df={df})"),
            TermTransform::WeibullTransform { variable, .. } => format!("weibull({variable})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmSpec {
    pub family: Family,
    pub link: Link,
    /// Response is the log of this variable when `log_response` is set.
    pub response: Variable,
    pub log_response: bool,
    pub terms: Vec<TermTransform>,
}

/// Design matrix (no intercept column) plus term column grouping.
pub struct TermDesign {
    pub matrix: DMatrix<f64>,
    pub groups: Vec<(String, Vec<usize>)>,
}

pub fn build_design(dataset: &CountryDataset, terms: &[TermTransform]) -> Result<TermDesign, RegressError> {
    let n = dataset.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut groups = Vec::new();
    for term in terms {
        let start = columns.len();
        match term {
            TermTransform::Raw(v) => columns.push(dataset.values(*v).to_vec()),
            TermTransform::Log(v) => columns.push(dataset.log_values(*v).to_vec()),
            TermTransform::Spline { variable, df } => {
                let basis = natural_spline_basis(dataset.log_values(*variable), *df)?;
                for j in 0..*df {
                    columns.push((0..n).map(|i| basis.basis[(i, j)]).collect());
                }
            }
            TermTransform::WeibullTransform { variable, shape, scale } => {
                columns.push(weibull_transform(dataset.log_values(*variable), *shape, *scale)?);
            }
        }
        groups.push((term.label(), (start..columns.len()).collect()));
    }
    let p = columns.len();
    let mut matrix = DMatrix::zeros(n, p);
    for (j, col) in columns.iter().enumerate() {
        for i in 0..n {
            matrix[(i, j)] = col[i];
        }
    }
    Ok(TermDesign { matrix, groups })
}

/// Log posterior for a GLM with normal coefficient priors and a
/// Normal(0, disp_prior_scale) prior on the log dispersion.
struct GlmTarget<'a> {
    /// Centered design including the leading intercept column.
    design: &'a DMatrix<f64>,
    y: &'a [f64],
    family: Family,
    link: Link,
    prior_centers: Vec<f64>,
    prior_scales: Vec<f64>,
    disp_prior_scale: f64,
    init: Vec<f64>,
}

impl<'a> GlmTarget<'a> {
    fn n_coef(&self) -> usize {
        self.design.ncols()
    }
}

fn pointwise_ll(family: Family, y: f64, mu: f64, log_disp: f64) -> f64 {
    match family {
        Family::Gaussian => {
            let sigma = log_disp.exp();
            let z = (y - mu) / sigma;
            -0.5 * (2.0 * std::f64::consts::PI).ln() - log_disp - 0.5 * z * z
        }
        Family::Gamma => {
            if mu <= 0.0 {
                return f64::NEG_INFINITY;
            }
            let alpha = log_disp.exp();
            alpha * (alpha.ln() - mu.ln()) + (alpha - 1.0) * y.ln() - alpha * y / mu
                - ln_gamma(alpha)
        }
    }
}

impl<'a> TargetDensity for GlmTarget<'a> {
    fn dimension(&self) -> usize {
        self.n_coef() + 1
    }

    fn initial_position(&self, chain_index: usize) -> Vec<f64> {
        // deterministic per-chain jitter around the frequentist start
        let mut v = self.init.clone();
        let mut h = 0x9E3779B97F4A7C15u64.wrapping_mul(chain_index as u64 + 1);
        for x in v.iter_mut() {
            h ^= h >> 33;
            h = h.wrapping_mul(0xFF51AFD7ED558CCD);
            let u = (h >> 11) as f64 / (1u64 << 53) as f64;
            *x += (u - 0.5) * 0.02;
        }
        v
    }

    fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>) {
        let p = self.n_coef();
        let beta = &position[..p];
        let log_disp = position[p];
        let n = self.y.len();
        let mut lp = 0.0;
        let mut grad = vec![0.0; p + 1];

        for i in 0..n {
            let mut eta = 0.0;
            for j in 0..p {
                eta += self.design[(i, j)] * beta[j];
            }
            let (mu, dmu_deta) = match self.link {
                Link::Identity => (eta, 1.0),
                Link::Log => {
                    let m = eta.exp();
                    (m, m)
                }
            };
            let y = self.y[i];
            lp += pointwise_ll(self.family, y, mu, log_disp);
            match self.family {
                Family::Gaussian => {
                    let sigma2 = (2.0 * log_disp).exp();
                    let score_mu = (y - mu) / sigma2;
                    let s = score_mu * dmu_deta;
                    for j in 0..p {
                        grad[j] += s * self.design[(i, j)];
                    }
                    let z2 = (y - mu) * (y - mu) / sigma2;
                    grad[p] += z2 - 1.0;
                }
                Family::Gamma => {
                    let alpha = log_disp.exp();
                    if mu <= 0.0 {
                        return (f64::NEG_INFINITY, vec![0.0; p + 1]);
                    }
                    let score_mu = alpha * (y - mu) / (mu * mu);
                    let s = score_mu * dmu_deta;
                    for j in 0..p {
                        grad[j] += s * self.design[(i, j)];
                    }
                    grad[p] +=
                        alpha * (alpha.ln() + 1.0 - mu.ln() + y.ln() - y / mu - digamma(alpha));
                }
            }
        }

        if !lp.is_finite() {
            return (f64::NEG_INFINITY, vec![0.0; p + 1]);
        }

        // priors
        for j in 0..p {
            let c = self.prior_centers[j];
            let s = self.prior_scales[j];
            lp += -0.5 * ((beta[j] - c) / s).powi(2);
            grad[j] += -(beta[j] - c) / (s * s);
        }
        let ds = self.disp_prior_scale;
        lp += -0.5 * (log_disp / ds).powi(2);
        grad[p] += -log_disp / (ds * ds);

        (lp, grad)
    }
}

/// A fitted Bayesian GLM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BglmFit {
    pub spec: Option<GlmSpec>,
    /// Posterior mean coefficients on the original (uncentered) scale,
    /// intercept first.
    pub coefficients: Vec<f64>,
    pub coefficient_sds: Vec<f64>,
    /// Posterior mean of the dispersion (sigma for Gaussian, shape for Gamma).
    pub dispersion: f64,
    pub fitted: Vec<f64>,
    pub draws: PosteriorDraws,
    pub diagnostics: crate::sampler::ChainDiagnostics,
    pub term_labels: Vec<String>,
}

impl BglmFit {
    pub fn pointwise_loglik(&self) -> &[Vec<f64>] {
        self.draws.pointwise_loglik.as_deref().unwrap_or(&[])
    }
}

/// Fits a GLM on an explicit no-intercept design matrix; an intercept is added
/// internally and the columns are centered for sampling geometry.
pub fn fit_glm_design(
    design: &DMatrix<f64>,
    y: &[f64],
    family: Family,
    link: Link,
    priors: &ObjectivePriors,
    config: &ChainConfig,
) -> Result<BglmFit, RegressError> {
    let n = y.len();
    let p = design.ncols();
    if n < 10 || design.nrows() != n {
        return Err(RegressError::TooShort { need: 10, got: n });
    }
    if family == Family::Gamma && y.iter().any(|&v| v <= 0.0) {
        return Err(RegressError::SupportError("Gamma requires a strictly positive response".into()));
    }
    if link == Link::Log && y.iter().any(|&v| v <= 0.0) {
        return Err(RegressError::SupportError("log link requires a positive response".into()));
    }

    // center predictors; the intercept absorbs the shift
    let col_means: Vec<f64> = (0..p).map(|j| design.column(j).iter().sum::<f64>() / n as f64).collect();
    let mut centered = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        centered[(i, 0)] = 1.0;
        for j in 0..p {
            centered[(i, j + 1)] = design[(i, j)] - col_means[j];
        }
    }

    // frequentist start on the link scale
    let work_y: Vec<f64> = match link {
        Link::Identity => y.to_vec(),
        Link::Log => y.iter().map(|v| v.ln()).collect(),
    };
    let start = weighted_least_squares(&centered, &work_y, None)
        .ok_or(RegressError::RankDeficiency)?;
    let resid_sd = (start.rss / (n.saturating_sub(p + 1).max(1)) as f64).sqrt().max(1e-8);
    let init_log_disp = match family {
        Family::Gaussian => resid_sd.ln(),
        // Gamma shape roughly 1 / CV^2 of the multiplicative residual
        Family::Gamma => (1.0 / (resid_sd * resid_sd).max(1e-6)).ln().clamp(-3.0, 8.0),
    };
    let mut init = start.coefficients.clone();
    init.push(init_log_disp);

    let mut prior_centers = vec![0.0; p + 1];
    let mut prior_scales = vec![priors.intercept_scale; p + 1];
    // the centered-design intercept is the mean prediction; center its prior
    // at the frequentist value from the same parameterization
    prior_centers[0] = start.coefficients[0];
    for j in 0..p {
        prior_scales[j + 1] = priors
            .coefficient_scales
            .get(j)
            .copied()
            .unwrap_or_else(|| priors.coefficient_scales.first().copied().unwrap_or(1.0));
    }

    let target = GlmTarget {
        design: &centered,
        y,
        family,
        link,
        prior_centers,
        prior_scales,
        disp_prior_scale: 5.0,
        init,
    };
    check_gradient(&target, 20, 0.1, config.seed ^ 0xA5A5)?;
    let mut draws = sample_hmc(&target, config)?;

    // pointwise log likelihood for LOO
    let s = draws.n_draws();
    let mut pll = Vec::with_capacity(s);
    for d in 0..s {
        let row = draws.row(d).to_vec();
        let mut obs = Vec::with_capacity(n);
        for i in 0..n {
            let mut eta = 0.0;
            for j in 0..=p {
                eta += centered[(i, j)] * row[j];
            }
            let mu = match link {
                Link::Identity => eta,
                Link::Log => eta.exp(),
            };
            obs.push(pointwise_ll(family, y[i], mu, row[p + 1]));
        }
        pll.push(obs);
    }
    draws.pointwise_loglik = Some(pll);

    let diagnostics = crate::sampler::diagnose(&draws, config);

    // posterior means, mapped back to the uncentered parameterization
    let mut centered_means = vec![0.0; p + 2];
    for (j, cm) in centered_means.iter_mut().enumerate() {
        *cm = draws.mean(j);
    }
    let mut coefficients = vec![0.0; p + 1];
    coefficients[0] =
        centered_means[0] - (0..p).map(|j| centered_means[j + 1] * col_means[j]).sum::<f64>();
    coefficients[1..=p].copy_from_slice(&centered_means[1..=p]);
    let mut coefficient_sds = vec![0.0; p + 1];
    for (j, csd) in coefficient_sds.iter_mut().enumerate().take(p + 1) {
        let col = draws.parameter(j);
        *csd = crate::numeric::stats::sd(&col);
    }
    let dispersion = mean(&draws.parameter(p + 1).iter().map(|v| v.exp()).collect::<Vec<f64>>());

    let fitted: Vec<f64> = (0..n)
        .map(|i| {
            let mut eta = centered_means[0];
            for j in 0..p {
                eta += centered[(i, j + 1)] * centered_means[j + 1];
            }
            match link {
                Link::Identity => eta,
                Link::Log => eta.exp(),
            }
        })
        .collect();

    Ok(BglmFit {
        spec: None,
        coefficients,
        coefficient_sds,
        dispersion,
        fitted,
        draws,
        diagnostics,
        term_labels: Vec::new(),
    })
}

/// Univariate Bayesian linear regression (Gaussian, identity link).
pub fn fit_bayes_lm(
    y: &[f64],
    x: &[f64],
    priors: &ObjectivePriors,
    config: &ChainConfig,
) -> Result<BglmFit, RegressError> {
    if y.len() != x.len() || y.len() < 10 {
        return Err(RegressError::TooShort { need: 10, got: y.len().min(x.len()) });
    }
    let design = DMatrix::from_fn(x.len(), 1, |i, _| x[i]);
    fit_glm_design(&design, y, Family::Gaussian, Link::Identity, priors, config)
}

/// Fits the spec's GLM over a country dataset.
pub fn fit_bglm(
    dataset: &CountryDataset,
    spec: &GlmSpec,
    config: &ChainConfig,
) -> Result<BglmFit, RegressError> {
    let design = build_design(dataset, &spec.terms)?;
    let y: Vec<f64> = if spec.log_response {
        dataset.log_values(spec.response).to_vec()
    } else {
        dataset.values(spec.response).to_vec()
    };
    let cols: Vec<Vec<f64>> = (0..design.matrix.ncols())
        .map(|j| design.matrix.column(j).iter().copied().collect())
        .collect();
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    let link_y: Vec<f64> = match spec.link {
        Link::Identity => y.clone(),
        Link::Log => y.iter().map(|v| v.ln()).collect(),
    };
    let priors = ObjectivePriors::from_frequentist(&refs, &link_y);
    let mut fit = fit_glm_design(&design.matrix, &y, spec.family, spec.link, &priors, config)?;
    fit.spec = Some(spec.clone());
    fit.term_labels = std::iter::once("Intercept".to_string())
        .chain(design.groups.iter().flat_map(|(label, cols)| {
            let label = label.clone();
            let many = cols.len() > 1;
            cols.iter().enumerate().map(move |(k, _)| {
                if many {
                    format!("{label}_{}", k + 1)
                } else {
                    label.clone()
                }
            })
        }))
        .collect();
    Ok(fit)
}
