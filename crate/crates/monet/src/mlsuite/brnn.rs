//! Bayesian regularized neural network: one tanh hidden layer trained by
//! Levenberg-Marquardt on the penalized objective SSE + alpha * SSW, with the
//! penalty strength re-estimated from the evidence framework. The objective
//! never increases: steps and penalty updates are only accepted when they
//! keep it non-increasing.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrnnParams {
    pub neurons: usize,
    pub epochs: usize,
}

impl Default for BrnnParams {
    fn default() -> Self {
        Self { neurons: 2, epochs: 60 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BrnnModel {
    params: BrnnParams,
    inputs: usize,
    /// Flat weight vector: hidden weights row-major, hidden biases, output
    /// weights, output bias.
    weights: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub alpha: f64,
}

fn n_weights(p: usize, h: usize) -> usize {
    h * (p + 1) + h + 1
}

/// Forward pass returning the output and the hidden activations.
fn forward(w: &[f64], p: usize, h: usize, row: &[f64]) -> (f64, Vec<f64>) {
    let mut hidden = Vec::with_capacity(h);
    for j in 0..h {
        let mut s = w[h * p + j]; // hidden bias
        for k in 0..p {
            s += w[j * p + k] * row[k];
        }
        hidden.push(s.tanh());
    }
    let base = h * (p + 1);
    let mut out = w[base + h]; // output bias
    for j in 0..h {
        out += w[base + j] * hidden[j];
    }
    (out, hidden)
}

/// Residuals and the Jacobian of residuals with respect to the weights.
fn residual_jacobian(
    w: &[f64],
    p: usize,
    h: usize,
    x: &[Vec<f64>],
    y: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.len();
    let nw = n_weights(p, h);
    let mut r = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, nw);
    let base = h * (p + 1);
    for i in 0..n {
        let (out, hidden) = forward(w, p, h, &x[i]);
        r[i] = out - y[i];
        for j in 0..h {
            let v = w[base + j];
            let d_tanh = 1.0 - hidden[j] * hidden[j];
            for k in 0..p {
                jac[(i, j * p + k)] = v * d_tanh * x[i][k];
            }
            jac[(i, h * p + j)] = v * d_tanh; // hidden bias
            jac[(i, base + j)] = hidden[j]; // output weight
        }
        jac[(i, base + h)] = 1.0; // output bias
    }
    (r, jac)
}

fn objective(sse: f64, alpha: f64, w: &[f64]) -> f64 {
    sse + alpha * w.iter().map(|v| v * v).sum::<f64>()
}

fn sse_of(w: &[f64], p: usize, h: usize, x: &[Vec<f64>], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(row, &t)| (forward(w, p, h, row).0 - t).powi(2)).sum()
}

impl BrnnModel {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: BrnnParams, seed: u64) -> Self {
        let p = x[0].len();
        let h = params.neurons.max(1);
        let nw = n_weights(p, h);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w: Vec<f64> = (0..nw).map(|_| (rng.random::<f64>() - 0.5) * 0.6).collect();
        let mut alpha = 0.01;
        let mut mu = 1e-3;
        let mut f_cur = objective(sse_of(&w, p, h, x, y), alpha, &w);
        let mut trace = vec![f_cur];

        for _ in 0..params.epochs {
            let (r, jac) = residual_jacobian(&w, p, h, x, y);
            let jtj = jac.transpose() * &jac;
            let rhs_base = jac.transpose() * &r;

            // evidence re-estimate of the penalty; keep it only when the
            // objective does not increase at the current weights
            let ssw: f64 = w.iter().map(|v| v * v).sum();
            let sse = r.norm_squared();
            let a_reg = &jtj + DMatrix::identity(nw, nw) * alpha;
            if let Some(inv) = a_reg.clone().try_inverse() {
                let gamma = nw as f64 - alpha * inv.trace();
                let n_eff = (x.len() as f64 - gamma).max(1.0);
                let cand = (gamma * sse / (n_eff * ssw.max(1e-12))).clamp(1e-8, 1e6);
                let f_cand = objective(sse, cand, &w);
                if f_cand <= f_cur {
                    alpha = cand;
                    f_cur = f_cand;
                    trace.push(f_cur);
                }
            }

            // Levenberg-Marquardt step with adaptive damping
            let mut improved = false;
            for _ in 0..8 {
                let lhs = &jtj + DMatrix::identity(nw, nw) * (alpha + mu);
                let grad = &rhs_base + DVector::from_iterator(nw, w.iter().map(|v| alpha * v));
                let Some(delta) = lhs.lu().solve(&(-grad)) else {
                    mu *= 10.0;
                    continue;
                };
                let w_try: Vec<f64> = w.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
                let f_try = objective(sse_of(&w_try, p, h, x, y), alpha, &w_try);
                if f_try < f_cur {
                    w = w_try;
                    f_cur = f_try;
                    trace.push(f_cur);
                    mu = (mu * 0.3).max(1e-12);
                    improved = true;
                    break;
                }
                mu *= 10.0;
            }
            if !improved && mu > 1e10 {
                break;
            }
        }

        Self { params, inputs: p, weights: w, objective_trace: trace, alpha }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        forward(&self.weights, self.inputs, self.params.neurons.max(1), row).0
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> Vec<f64> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    pub fn params(&self) -> BrnnParams {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    #[test]
    fn objective_is_non_increasing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let nz = rand_distr::Normal::new(0.0, 0.1).unwrap();
        let x: Vec<Vec<f64>> = (0..120).map(|i| vec![i as f64 / 20.0 - 3.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0].tanh() * 2.0 + nz.sample(&mut rng)).collect();
        let model = BrnnModel::fit(&x, &y, BrnnParams { neurons: 3, epochs: 80 }, 2);
        for pair in model.objective_trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn fits_smooth_function() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 100.0 - 1.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| (2.0 * r[0]).sin()).collect();
        let model = BrnnModel::fit(&x, &y, BrnnParams { neurons: 4, epochs: 150 }, 3);
        let preds = model.predict_all(&x);
        let mse: f64 =
            preds.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;
        assert!(mse < 0.01, "mse {mse}");
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1]).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 0.5 + 1.0).collect();
        let a = BrnnModel::fit(&x, &y, BrnnParams::default(), 7).predict_all(&x);
        let b = BrnnModel::fit(&x, &y, BrnnParams::default(), 7).predict_all(&x);
        assert_eq!(a, b);
    }
}
