//! Epsilon-insensitive support vector regression with a radial basis kernel,
//! trained by sequential two-coefficient optimization under the equality
//! constraint of the dual.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub c: f64,
    /// RBF width: k(x,z) = exp(-gamma * ||x-z||^2).
    pub gamma: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvrModel {
    params: SvrParams,
    support: Vec<Vec<f64>>,
    /// beta_i = alpha_i - alpha_i^* for each support vector.
    beta: Vec<f64>,
    bias: f64,
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, z)| (x - z) * (x - z)).sum();
    (-gamma * d2).exp()
}

/// Median-heuristic RBF width: 1 / (2 * median pairwise squared distance).
pub fn median_heuristic_gamma(x: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let mut d2 = Vec::new();
    let step = (n / 64).max(1);
    for i in (0..n).step_by(step) {
        for j in (i + 1..n).step_by(step) {
            let d: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            if d > 0.0 {
                d2.push(d);
            }
        }
    }
    if d2.is_empty() {
        return 1.0;
    }
    d2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = d2[d2.len() / 2];
    1.0 / (2.0 * med)
}

/// Dual objective: 0.5 b'Kb - b'y + eps * |b|_1 (to be minimized).
fn dual_objective(beta: &[f64], k: &[Vec<f64>], y: &[f64], eps: f64) -> f64 {
    let n = beta.len();
    let mut quad = 0.0;
    for i in 0..n {
        if beta[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += beta[i] * beta[j] * k[i][j];
        }
    }
    0.5 * quad - beta.iter().zip(y).map(|(b, t)| b * t).sum::<f64>()
        + eps * beta.iter().map(|b| b.abs()).sum::<f64>()
}

impl SvrModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: SvrParams, seed: u64) -> Self {
        let n = x.len();
        let k: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| rbf(&x[i], &x[j], params.gamma)).collect()).collect();
        let mut beta = vec![0.0; n];
        // f_i without bias
        let mut f = vec![0.0; n];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = params.c;
        let eps = params.epsilon;

        let sweeps = 60;
        for _ in 0..sweeps {
            let mut changed = 0usize;
            for _ in 0..2 * n {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n);
                if i == j {
                    j = (j + 1) % n;
                }
                let eta = k[i][i] + k[j][j] - 2.0 * k[i][j];
                if eta <= 1e-12 {
                    continue;
                }
                // delta moves beta_i up and beta_j down, preserving the sum
                let g = (f[i] - y[i]) - (f[j] - y[j]);
                let mut best_delta = 0.0;
                let mut best_gain = 1e-12;
                for (si, sj) in
                    [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                {
                    // stationary point in the quadrant where sign(beta_i)=si,
                    // sign(beta_j)=sj after the move
                    let delta = -(g + eps * (si - sj)) / eta;
                    let (lo_i, hi_i) = if si > 0.0 { (0.0, c) } else { (-c, 0.0) };
                    let (lo_j, hi_j) = if sj > 0.0 { (0.0, c) } else { (-c, 0.0) };
                    let d_lo = (lo_i - beta[i]).max(beta[j] - hi_j);
                    let d_hi = (hi_i - beta[i]).min(beta[j] - lo_j);
                    if d_lo > d_hi {
                        continue;
                    }
                    let d = delta.clamp(d_lo, d_hi);
                    if d == 0.0 {
                        continue;
                    }
                    // gain = decrease of the dual objective along this move
                    let lin = g * d + 0.5 * eta * d * d;
                    let pen = eps
                        * ((beta[i] + d).abs() - beta[i].abs() + (beta[j] - d).abs()
                            - beta[j].abs());
                    let gain = -(lin + pen);
                    if gain > best_gain {
                        best_gain = gain;
                        best_delta = d;
                    }
                }
                if best_delta != 0.0 {
                    beta[i] += best_delta;
                    beta[j] -= best_delta;
                    for t in 0..n {
                        f[t] += best_delta * (k[i][t] - k[j][t]);
                    }
                    changed += 1;
                }
            }
            if changed == 0 {
                break;
            }
        }
        debug_assert!(dual_objective(&beta, &k, y, eps).is_finite());

        // bias from unbounded support vectors' KKT conditions
        let mut b_vals = Vec::new();
        for i in 0..n {
            let a = beta[i].abs();
            if a > 1e-8 && a < c - 1e-8 {
                b_vals.push(y[i] - f[i] - eps * beta[i].signum());
            }
        }
        let bias = if b_vals.is_empty() {
            let resid: Vec<f64> = (0..n).map(|i| y[i] - f[i]).collect();
            crate::numeric::stats::mean(&resid)
        } else {
            crate::numeric::stats::mean(&b_vals)
        };

        let mut support = Vec::new();
        let mut sbeta = Vec::new();
        for i in 0..n {
            if beta[i].abs() > 1e-10 {
                support.push(x[i].clone());
                sbeta.push(beta[i]);
            }
        }
        Self { params, support, beta: sbeta, bias }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.bias
            + self
                .support
                .iter()
                .zip(&self.beta)
                .map(|(s, b)| b * rbf(s, row, self.params.gamma))
                .sum::<f64>()
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    pub fn params(&self) -> SvrParams {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    #[test]
    fn fits_linear_function() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 20.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 + 0.8 * r[0]).collect();
        let gamma = median_heuristic_gamma(&x);
        let model = SvrModel::fit(&x, &y, SvrParams { c: 16.0, gamma, epsilon: 0.1 }, 1);
        for (row, &t) in x.iter().zip(&y) {
            assert!((model.predict(row) - t).abs() < 0.3, "{} vs {t}", model.predict(row));
        }
    }

    #[test]
    fn zero_column_is_ignored() {
        let x: Vec<Vec<f64>> = (0..80).map(|i| vec![(i as f64 * 0.37).sin() * 3.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[0] * 0.2).collect();
        let x_aug: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], 0.0]).collect();
        let gamma = median_heuristic_gamma(&x);
        assert_eq!(gamma, median_heuristic_gamma(&x_aug));
        let p = SvrParams { c: 8.0, gamma, epsilon: 0.1 };
        let a = SvrModel::fit(&x, &y, p, 5).predict_all(&x);
        let b = SvrModel::fit(&x_aug, &y, p, 5).predict_all(&x_aug);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-8, "{u} vs {v}");
        }
    }

    #[test]
    fn kernel_matrix_is_symmetric_psd() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> =
            (0..40).map(|_| (0..3).map(|_| rng.random::<f64>() * 4.0).collect()).collect();
        let gamma = median_heuristic_gamma(&x);
        let k = DMatrix::from_fn(40, 40, |i, j| rbf(&x[i], &x[j], gamma));
        assert!((&k - k.transpose()).abs().max() < 1e-12);
        let eig = k.symmetric_eigen();
        for v in eig.eigenvalues.iter() {
            assert!(*v > -1e-8, "eigenvalue {v}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 * 0.1, (i as f64 * 0.3).cos()]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] + r[1]).collect();
        let p = SvrParams { c: 4.0, gamma: 0.5, epsilon: 0.1 };
        let a = SvrModel::fit(&x, &y, p, 11).predict_all(&x);
        let b = SvrModel::fit(&x, &y, p, 11).predict_all(&x);
        assert_eq!(a, b);
    }
}
