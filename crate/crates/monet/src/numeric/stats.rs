//! Basic sample statistics and least-squares helpers.

use nalgebra::{DMatrix, DVector};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (n − 1 denominator).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn sd(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Type-7 (linear interpolation) sample quantile, matching common defaults.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(x: &[f64]) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile(&s, 0.5)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Midranks (average rank for ties), 1-based.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    /// Unscaled covariance (X'WX)^-1; multiply by the error variance estimate.
    pub xtx_inv: DMatrix<f64>,
}

/// Weighted least squares via the normal equations with a Cholesky solve.
/// `weights = None` is ordinary least squares.
pub fn weighted_least_squares(
    design: &DMatrix<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
) -> Option<OlsFit> {
    let n = design.nrows();
    assert_eq!(n, y.len());
    let yv = DVector::from_column_slice(y);
    let (xtx, xty) = match weights {
        None => (design.transpose() * design, design.transpose() * &yv),
        Some(w) => {
            assert_eq!(w.len(), n);
            let mut wx = design.clone();
            for (mut row, &wi) in wx.row_iter_mut().zip(w.iter()) {
                row *= wi;
            }
            (design.transpose() * &wx, wx.transpose() * &yv)
        }
    };
    let chol = xtx.clone().cholesky()?;
    let beta = chol.solve(&xty);
    let xtx_inv = chol.inverse();
    let fitted = design * &beta;
    let residuals: Vec<f64> = yv.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss = match weights {
        None => residuals.iter().map(|r| r * r).sum(),
        Some(w) => residuals.iter().zip(w).map(|(r, wi)| wi * r * r).sum(),
    };
    Some(OlsFit {
        coefficients: beta.iter().copied().collect(),
        fitted: fitted.iter().copied().collect(),
        residuals,
        rss,
        xtx_inv,
    })
}

/// Ordinary least squares of `y` on an intercept plus the given columns.
pub fn ols_with_intercept(columns: &[&[f64]], y: &[f64]) -> Option<OlsFit> {
    let n = y.len();
    let p = columns.len() + 1;
    let mut design = DMatrix::zeros(n, p);
    for i in 0..n {
        design[(i, 0)] = 1.0;
        for (j, col) in columns.iter().enumerate() {
            design[(i, j + 1)] = col[i];
        }
    }
    weighted_least_squares(&design, y, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quantiles_and_moments() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(mean(&x), 2.5);
        assert_relative_eq!(variance(&x), 5.0 / 3.0);
        let mut s = x;
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(quantile(&s, 0.5), 2.5);
        assert_relative_eq!(quantile(&s, 0.0), 1.0);
        assert_relative_eq!(quantile(&s, 1.0), 4.0);
    }

    #[test]
    fn ranks_handle_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.5 + 2.0 * v).collect();
        let fit = ols_with_intercept(&[&x], &y).unwrap();
        assert_relative_eq!(fit.coefficients[0], 1.5, epsilon = 1e-10);
        assert_relative_eq!(fit.coefficients[1], 2.0, epsilon = 1e-10);
        assert!(fit.rss < 1e-18);
    }

    #[test]
    fn wls_downweights_outlier() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        y[9] = 100.0;
        let mut w = vec![1.0; 10];
        w[9] = 0.0;
        let n = 10;
        let mut design = DMatrix::zeros(n, 2);
        for i in 0..n {
            design[(i, 0)] = 1.0;
            design[(i, 1)] = x[i];
        }
        let fit = weighted_least_squares(&design, &y, Some(&w)).unwrap();
        assert_relative_eq!(fit.coefficients[1], 2.0, epsilon = 1e-8);
    }
}
