//! Hamiltonian Monte Carlo with dynamic (no-U-turn) trajectories.
//!
//! Multinomial trajectory sampling, dual-averaging step-size adaptation and
//! diagonal mass-matrix estimation during warmup. Deterministic given the
//! target, the configuration and the master seed: each chain derives its own
//! counter-based stream, so chain-level parallelism cannot change results.

mod diagnostics;
mod nuts;

pub use diagnostics::{diagnose, ChainDiagnostics};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SamplerError {
    #[error("log density or gradient non-finite at {point:?}")]
    NonFiniteGradient { point: Vec<f64> },
    #[error("all transitions diverged during adaptation; the target is likely misspecified")]
    AllDivergent,
    #[error("invalid chain configuration: {0}")]
    BadConfig(String),
}

/// A differentiable log target density.
pub trait TargetDensity: Sync {
    fn dimension(&self) -> usize;
    /// Log density and its gradient at `position`.
    fn log_density_gradient(&self, position: &[f64]) -> (f64, Vec<f64>);
    /// Starting point for chain `chain_index`; defaults to the origin.
    fn initial_position(&self, _chain_index: usize) -> Vec<f64> {
        vec![0.0; self.dimension()]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainConfig {
    pub chains: usize,
    pub warmup: usize,
    pub keep: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { chains: 4, warmup: 1000, keep: 1000, target_accept: 0.8, max_tree_depth: 10, seed: 0 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.chains < 2 {
            return Err(SamplerError::BadConfig("need at least 2 chains".into()));
        }
        if self.warmup < 100 || self.keep < 100 {
            return Err(SamplerError::BadConfig("warmup and kept draws must each be >= 100".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(SamplerError::BadConfig("target_accept must lie in (0,1)".into()));
        }
        Ok(())
    }

    /// Reduced-size configuration for tests and quick runs.
    pub fn quick(seed: u64) -> Self {
        Self { chains: 2, warmup: 300, keep: 300, seed, ..Default::default() }
    }
}

/// Posterior draws stored row-major: `chains * keep` rows of `dimension`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub chains: usize,
    pub keep: usize,
    pub dimension: usize,
    pub draws: Vec<f64>,
    /// Per-draw, per-observation log likelihood (row-major, n_obs columns),
    /// filled in by model code for LOO.
    pub pointwise_loglik: Option<Vec<Vec<f64>>>,
    pub divergence_count: usize,
}

impl PosteriorDraws {
    /// Empty container; callers fill `draws` or attach pointwise log
    /// likelihoods directly (mainly test fixtures).
    pub fn new(chains: usize, keep: usize, dimension: usize) -> Self {
        Self {
            chains,
            keep,
            dimension,
            draws: vec![0.0; chains * keep * dimension],
            pointwise_loglik: None,
            divergence_count: 0,
        }
    }

    pub fn n_draws(&self) -> usize {
        self.chains * self.keep
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.draws[i * self.dimension..(i + 1) * self.dimension]
    }

    /// All draws of one parameter.
    pub fn parameter(&self, j: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|i| self.draws[i * self.dimension + j]).collect()
    }

    /// One chain's draws of one parameter.
    pub fn chain_parameter(&self, chain: usize, j: usize) -> Vec<f64> {
        (0..self.keep)
            .map(|k| self.draws[(chain * self.keep + k) * self.dimension + j])
            .collect()
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.parameter(j).iter().sum::<f64>() / self.n_draws() as f64
    }
}

/// Runs the configured chains and merges draws deterministically by chain index.
pub fn sample_hmc<T: TargetDensity>(
    target: &T,
    config: &ChainConfig,
) -> Result<PosteriorDraws, SamplerError> {
    config.validate()?;
    let dim = target.dimension();

    let results: Vec<Result<nuts::ChainOutput, SamplerError>> = (0..config.chains)
        .into_par_iter()
        .map(|chain| nuts::run_chain(target, config, chain))
        .collect();

    let mut draws = Vec::with_capacity(config.chains * config.keep * dim);
    let mut divergence_count = 0;
    for r in results {
        let out = r?;
        divergence_count += out.divergences;
        draws.extend(out.draws);
    }
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(SamplerError::NonFiniteGradient { point: vec![f64::NAN; dim] });
    }
    Ok(PosteriorDraws {
        chains: config.chains,
        keep: config.keep,
        dimension: dim,
        draws,
        pointwise_loglik: None,
        divergence_count,
    })
}

/// Checks an analytic gradient against central finite differences at random
/// probe points. Model code calls this before sampling.
pub fn check_gradient<T: TargetDensity>(
    target: &T,
    probes: usize,
    scale: f64,
    seed: u64,
) -> Result<(), SamplerError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = target.dimension();
    let h = 1e-6;
    for _ in 0..probes {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-scale..scale)).collect();
        let (lp, grad) = target.log_density_gradient(&x);
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(SamplerError::NonFiniteGradient { point: x });
        }
        for j in 0..dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (target.log_density_gradient(&xp).0 - target.log_density_gradient(&xm).0)
                / (2.0 * h);
            let denom = fd.abs().max(grad[j].abs()).max(1.0);
            if (fd - grad[j]).abs() / denom > 1e-4 {
                return Err(SamplerError::NonFiniteGradient { point: x });
            }
        }
    }
    Ok(())
}
