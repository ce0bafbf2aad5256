//! Model-quality metrics: PSIS-LOO cross-validation, MAE/RMSE with
//! percent-of-minimum reporting, and df-corrected generalized variance
//! inflation factors.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("need at least {need} draws, got {got}")]
    TooFewDraws { need: usize, got: usize },
    #[error("non-finite log likelihood entry at draw {draw}, observation {obs}")]
    NonFinite { draw: usize, obs: usize },
    #[error("design matrix is singular or collinear within a term group")]
    SingularDesign,
}

/// PSIS-LOO summary. `looic` is exactly `-2 * elpd_loo`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooReport {
    pub elpd_loo: f64,
    pub se_elpd: f64,
    pub p_loo: f64,
    pub looic: f64,
    pub pareto_k: Vec<f64>,
    pub mc_se: f64,
    /// Observations with Pareto k at or above 0.7.
    pub high_k_count: usize,
    /// Set when all importance ratios were equal and the exact lpd was returned.
    pub degenerate_weights: bool,
}

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Generalized Pareto fit to exceedances by the profile-posterior quick
/// estimator, with the usual weak prior pulling k toward 0.5.
fn gpd_fit(exceedances: &mut [f64]) -> (f64, f64) {
    exceedances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let x = exceedances;
    let n = x.len();
    if n < 5 || x[n - 1] <= 0.0 {
        return (f64::INFINITY, f64::NAN);
    }
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let quart = x[(n as f64 / 4.0 + 0.5).floor() as usize % n].max(1e-300);
    let mut thetas = Vec::with_capacity(m);
    let mut profile = Vec::with_capacity(m);
    for j in 1..=m {
        let theta = 1.0 / x[n - 1] + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / (3.0 * quart);
        let k = x.iter().map(|&v| (-theta * v).ln_1p()).sum::<f64>() / n as f64;
        let l = n as f64 * ((-theta / k).ln() + k - 1.0);
        thetas.push(theta);
        profile.push(if l.is_finite() { l } else { f64::NEG_INFINITY });
    }
    let lse = logsumexp(&profile);
    let mut theta_hat = 0.0;
    for (t, l) in thetas.iter().zip(&profile) {
        theta_hat += t * (l - lse).exp();
    }
    let k_hat = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k_hat / theta_hat;
    // regularize toward 0.5 with 10 pseudo-observations
    let k_reg = (n as f64 * k_hat + 5.0) / (n as f64 + 10.0);
    (k_reg, sigma)
}

fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (1.0 - p).ln()
    } else {
        sigma * ((1.0 - p).powf(-k) - 1.0) / k
    }
}

/// Smooths one observation's log importance ratios in place; returns Pareto k.
fn psis_smooth(log_ratios: &mut [f64]) -> f64 {
    let s = log_ratios.len();
    let max_lr = log_ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for lr in log_ratios.iter_mut() {
        *lr -= max_lr;
    }
    let tail_len = ((0.2 * s as f64).min(3.0 * (s as f64).sqrt())).ceil() as usize;
    if tail_len < 5 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| log_ratios[a].partial_cmp(&log_ratios[b]).unwrap());
    let cut_idx = order[s - tail_len - 1];
    let cutpoint = log_ratios[cut_idx].exp();
    let tail: Vec<usize> = order[s - tail_len..].to_vec();
    let mut exceed: Vec<f64> = tail.iter().map(|&i| log_ratios[i].exp() - cutpoint).collect();
    if exceed.iter().all(|&e| e <= 0.0) || exceed.last().copied().unwrap_or(0.0) == exceed[0] {
        return 0.0;
    }
    let (k, sigma) = gpd_fit(&mut exceed);
    if !k.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
        return f64::INFINITY;
    }
    // replace ordered tail weights by expected GPD order statistics, capped at
    // the largest raw weight
    for (rank, &i) in tail.iter().enumerate() {
        let p = (rank as f64 + 0.5) / tail_len as f64;
        let q = cutpoint + gpd_quantile(p, k, sigma);
        log_ratios[i] = q.ln().min(0.0);
    }
    k
}

/// Pareto-smoothed importance-sampling leave-one-out cross-validation from a
/// draws-by-observations pointwise log-likelihood matrix.
pub fn psis_loo(pointwise_loglik: &[Vec<f64>]) -> Result<LooReport, EvalError> {
    let s = pointwise_loglik.len();
    if s == 0 || pointwise_loglik[0].is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if s < 400 {
        return Err(EvalError::TooFewDraws { need: 400, got: s });
    }
    let n = pointwise_loglik[0].len();
    for (d, row) in pointwise_loglik.iter().enumerate() {
        if let Some(o) = row.iter().position(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite { draw: d, obs: o });
        }
    }

    let mut elpd_i = Vec::with_capacity(n);
    let mut lpd_i = Vec::with_capacity(n);
    let mut pareto_k = Vec::with_capacity(n);
    let mut mc_var_total = 0.0;
    let mut degenerate_all = true;

    for i in 0..n {
        let ll: Vec<f64> = pointwise_loglik.iter().map(|row| row[i]).collect();
        let lpd = logsumexp(&ll) - (s as f64).ln();
        lpd_i.push(lpd);

        let mut lw: Vec<f64> = ll.iter().map(|v| -v).collect();
        let spread = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - lw.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread < 1e-12 {
            // all ratios equal: importance sampling is exact
            pareto_k.push(0.0);
            elpd_i.push(lpd);
            continue;
        }
        degenerate_all = false;
        let k = psis_smooth(&mut lw);
        pareto_k.push(k);
        let norm = logsumexp(&lw);
        for w in lw.iter_mut() {
            *w -= norm;
        }
        let weighted: Vec<f64> = lw.iter().zip(&ll).map(|(w, l)| w + l).collect();
        let elpd = logsumexp(&weighted);
        elpd_i.push(elpd);

        // weighted-variance Monte Carlo error of exp(elpd_i), delta method
        let mu = elpd.exp();
        let mut var = 0.0;
        for (w, l) in lw.iter().zip(&ll) {
            let wn = w.exp();
            var += wn * wn * (l.exp() - mu) * (l.exp() - mu);
        }
        if mu > 0.0 {
            mc_var_total += var / (mu * mu);
        }
    }

    let elpd_loo: f64 = elpd_i.iter().sum();
    let p_loo: f64 = lpd_i.iter().zip(&elpd_i).map(|(l, e)| l - e).sum();
    let mean_elpd = elpd_loo / n as f64;
    let var_elpd =
        elpd_i.iter().map(|e| (e - mean_elpd) * (e - mean_elpd)).sum::<f64>() / (n as f64 - 1.0);
    let se_elpd = (n as f64 * var_elpd).sqrt();
    let high_k_count = pareto_k.iter().filter(|&&k| k >= 0.7).count();
    Ok(LooReport {
        elpd_loo,
        se_elpd,
        p_loo,
        looic: -2.0 * elpd_loo,
        pareto_k,
        mc_se: mc_var_total.sqrt(),
        high_k_count,
        degenerate_weights: degenerate_all,
    })
}

/// Per-observation ELPD values recomputed from the matrix, for paired model
/// comparison.
pub fn pointwise_elpd(pointwise_loglik: &[Vec<f64>]) -> Result<Vec<f64>, EvalError> {
    let s = pointwise_loglik.len();
    if s == 0 || pointwise_loglik[0].is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = pointwise_loglik[0].len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let ll: Vec<f64> = pointwise_loglik.iter().map(|row| row[i]).collect();
        let mut lw: Vec<f64> = ll.iter().map(|v| -v).collect();
        let spread = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - lw.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread < 1e-12 {
            out.push(logsumexp(&ll) - (s as f64).ln());
            continue;
        }
        psis_smooth(&mut lw);
        let norm = logsumexp(&lw);
        let weighted: Vec<f64> = lw.iter().zip(&ll).map(|(w, l)| w - norm + l).collect();
        out.push(logsumexp(&weighted));
    }
    Ok(out)
}

/// MAE/RMSE (and their percent-of-minimum forms) plus optional R².
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub mae_pct_min: f64,
    pub rmse_pct_min: f64,
    pub r2: Option<f64>,
}

/// `with_r2` should be set only for Gaussian (or binomial) families.
pub fn point_metrics(y: &[f64], yhat: &[f64], with_r2: bool) -> Result<PointMetrics, EvalError> {
    if y.is_empty() || y.len() != yhat.len() {
        return Err(EvalError::EmptyInput);
    }
    let n = y.len() as f64;
    let mae = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let rmse = (y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt();
    let min_y = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let (mae_pct_min, rmse_pct_min) = if min_y > 0.0 {
        (mae / min_y * 100.0, rmse / min_y * 100.0)
    } else {
        (f64::NAN, f64::NAN)
    };
    let r2 = if with_r2 {
        let mean_y = y.iter().sum::<f64>() / n;
        let tss: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
        let rss: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
        if tss > 0.0 {
            Some(1.0 - rss / tss)
        } else {
            None
        }
    } else {
        None
    };
    Ok(PointMetrics { mae, rmse, mae_pct_min, rmse_pct_min, r2 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GvifTerm {
    pub name: String,
    pub df: usize,
    pub gvif: f64,
    /// GVIF^(1/(2 df)), comparable across group sizes.
    pub gvif_df_corrected: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GvifReport {
    pub terms: Vec<GvifTerm>,
}

fn correlation_matrix(design: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = design.nrows();
    let p = design.ncols();
    let mut centered = design.clone();
    for j in 0..p {
        let mean: f64 = design.column(j).iter().sum::<f64>() / n as f64;
        let mut norm = 0.0;
        for i in 0..n {
            centered[(i, j)] -= mean;
            norm += centered[(i, j)] * centered[(i, j)];
        }
        if norm <= 0.0 {
            return None;
        }
        let inv = 1.0 / norm.sqrt();
        for i in 0..n {
            centered[(i, j)] *= inv;
        }
    }
    Some(centered.transpose() * centered)
}

/// Generalized variance inflation factors per term group (intercept excluded
/// from the design).
pub fn gvif(
    design: &DMatrix<f64>,
    term_groups: &[(String, Vec<usize>)],
) -> Result<GvifReport, EvalError> {
    let p = design.ncols();
    let mut seen = vec![false; p];
    for (_, cols) in term_groups {
        for &c in cols {
            if c >= p || seen[c] {
                return Err(EvalError::SingularDesign);
            }
            seen[c] = true;
        }
    }
    let r = correlation_matrix(design).ok_or(EvalError::SingularDesign)?;
    let det_r = r.clone().lu().determinant();
    if !(det_r > 1e-12) {
        return Err(EvalError::SingularDesign);
    }
    let mut terms = Vec::new();
    for (name, cols) in term_groups {
        let others: Vec<usize> = (0..p).filter(|c| !cols.contains(c)).collect();
        let r11 = r.select_rows(cols.iter()).select_columns(cols.iter());
        let det11 = r11.lu().determinant();
        let det22 = if others.is_empty() {
            1.0
        } else {
            r.select_rows(others.iter()).select_columns(others.iter()).lu().determinant()
        };
        let g = (det11 * det22 / det_r).max(1.0 - 1e-9);
        terms.push(GvifTerm {
            name: name.clone(),
            df: cols.len(),
            gvif: g,
            gvif_df_corrected: g.powf(1.0 / (2.0 * cols.len() as f64)),
        });
    }
    Ok(GvifReport { terms })
}
