//! Chain convergence diagnostics: split potential-scale-reduction and
//! rank-normalized effective sample sizes.

use super::{ChainConfig, PosteriorDraws};
use crate::numeric::stats::{mean, variance};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub rhat: Vec<f64>,
    pub ess_bulk: Vec<f64>,
    pub ess_tail: Vec<f64>,
    pub divergences: usize,
    /// True when every rhat <= 1.01 and no transition diverged.
    pub healthy: bool,
}

/// Splits each chain in half and computes the potential scale reduction over
/// the resulting sequences.
fn split_rhat(sequences: &[Vec<f64>]) -> f64 {
    let m = sequences.len() as f64;
    let n = sequences[0].len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let chain_means: Vec<f64> = sequences.iter().map(|c| mean(c)).collect();
    let chain_vars: Vec<f64> = sequences.iter().map(|c| variance(c)).collect();
    let w = mean(&chain_vars);
    let grand = mean(&chain_means);
    let b = n / (m - 1.0) * chain_means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>();
    if w <= 0.0 {
        // all sequences constant: identical chains are converged by definition
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

fn split_chains(per_chain: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(per_chain.len() * 2);
    for c in per_chain {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Rank-normalization: map pooled draws to normal scores via average ranks.
fn rank_normalize(per_chain: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
    let ranks = crate::numeric::stats::ranks(&pooled);
    let n = pooled.len() as f64;
    let z: Vec<f64> = ranks.iter().map(|r| normal_quantile((r - 0.375) / (n + 0.25))).collect();
    let mut out = Vec::with_capacity(per_chain.len());
    let mut offset = 0;
    for c in per_chain {
        out.push(z[offset..offset + c.len()].to_vec());
        offset += c.len();
    }
    out
}

/// ESS from chain-averaged autocorrelations with Geyer's initial monotone
/// positive sequence truncation.
fn ess(sequences: &[Vec<f64>]) -> f64 {
    let m = sequences.len() as f64;
    let n = sequences[0].len();
    if n < 4 {
        return f64::NAN;
    }
    let chain_vars: Vec<f64> = sequences.iter().map(|c| variance(c)).collect();
    let w = mean(&chain_vars);
    let chain_means: Vec<f64> = sequences.iter().map(|c| mean(c)).collect();
    let grand = mean(&chain_means);
    let b_over_n = if sequences.len() > 1 {
        chain_means.iter().map(|x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if var_plus <= 0.0 || !var_plus.is_finite() {
        return 0.0;
    }

    // chain-averaged autocovariance at each lag
    let autocov = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for (c, cm) in sequences.iter().zip(&chain_means) {
            let mut s = 0.0;
            for t in 0..n - lag {
                s += (c[t] - cm) * (c[t + lag] - cm);
            }
            acc += s / n as f64;
        }
        acc / m
    };

    let mut rho_sum = 0.0;
    let mut lag = 1;
    let mut prev_pair = f64::INFINITY;
    while lag + 1 < n {
        let pair = (var_plus - autocov(lag)) / var_plus + (var_plus - autocov(lag + 1)) / var_plus;
        let rho_pair = 2.0 - pair;
        if rho_pair < 0.0 {
            break;
        }
        // enforce monotone decrease of the paired sums
        let bounded = rho_pair.min(prev_pair);
        rho_sum += bounded;
        prev_pair = bounded;
        lag += 2;
    }
    let tau = 1.0 + rho_sum;
    let total = m * n as f64;
    (total / tau).min(total)
}

/// Acklam-style rational approximation to the standard normal quantile.
fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

pub fn diagnose(draws: &PosteriorDraws, _config: &ChainConfig) -> ChainDiagnostics {
    assert!(draws.chains >= 2, "diagnostics need at least 2 chains");
    let dim = draws.dimension;
    let mut rhat = Vec::with_capacity(dim);
    let mut ess_bulk = Vec::with_capacity(dim);
    let mut ess_tail = Vec::with_capacity(dim);
    for j in 0..dim {
        let per_chain: Vec<Vec<f64>> =
            (0..draws.chains).map(|c| draws.chain_parameter(c, j)).collect();
        let split = split_chains(&per_chain);
        let normalized = rank_normalize(&split);
        rhat.push(split_rhat(&normalized).max(split_rhat(&split)));
        ess_bulk.push(ess(&normalized));

        // tail ESS: worse of the 5% / 95% exceedance indicator sequences
        let pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
        let mut sorted = pooled.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q05 = crate::numeric::stats::quantile(&sorted, 0.05);
        let q95 = crate::numeric::stats::quantile(&sorted, 0.95);
        if q05 == q95 {
            ess_tail.push(0.0); // degenerate draws
        } else {
            let lower: Vec<Vec<f64>> = split
                .iter()
                .map(|c| c.iter().map(|&v| (v <= q05) as i32 as f64).collect())
                .collect();
            let upper: Vec<Vec<f64>> = split
                .iter()
                .map(|c| c.iter().map(|&v| (v >= q95) as i32 as f64).collect())
                .collect();
            ess_tail.push(ess(&lower).min(ess(&upper)));
        }
    }
    let healthy = draws.divergence_count == 0
        && rhat.iter().all(|r| r.is_finite() && *r <= 1.01)
        && ess_bulk.iter().all(|e| *e > 0.0);
    ChainDiagnostics { rhat, ess_bulk, ess_tail, divergences: draws.divergence_count, healthy }
}
