//! Derivative-free Nelder–Mead minimization.

#[derive(Debug, Clone)]
pub struct NmOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self { max_iter: 2000, tol: 1e-8, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0` with the standard reflect/expand/contract
/// simplex moves.
pub fn minimize<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NmOptions) -> NmResult {
    let n = x0.len();
    assert!(n >= 1);
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        let step = if v[i].abs() > 1e-8 { opts.initial_step * v[i].abs() } else { opts.initial_step };
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        if (values[worst] - values[best]).abs() <= opts.tol * (1.0 + values[best].abs()) {
            converged = true;
            break;
        }

        // centroid of all but the worst point
        let mut centroid = vec![0.0; n];
        for (i, v) in simplex.iter().enumerate() {
            if i == worst {
                continue;
            }
            for (c, vi) in centroid.iter_mut().zip(v) {
                *c += vi / n as f64;
            }
        }

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&simplex[worst])
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let fr = f(&reflect);

        if fr < values[best] {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + gamma * alpha * (c - w))
                .collect();
            let fe = f(&expand);
            if fe < fr {
                simplex[worst] = expand;
                values[worst] = fe;
            } else {
                simplex[worst] = reflect;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = fr;
        } else {
            let contract: Vec<f64> = if fr < values[worst] {
                centroid.iter().zip(&reflect).map(|(c, r)| c + rho * (r - c)).collect()
            } else {
                centroid.iter().zip(&simplex[worst]).map(|(c, w)| c + rho * (w - c)).collect()
            };
            let fc = f(&contract);
            if fc < values[worst].min(fr) {
                simplex[worst] = contract;
                values[worst] = fc;
            } else {
                // shrink toward the best vertex
                let best_point = simplex[best].clone();
                for i in 0..=n {
                    if i == best {
                        continue;
                    }
                    for (v, b) in simplex[i].iter_mut().zip(&best_point) {
                        *v = b + sigma * (*v - b);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }

    let (argmin, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    NmResult { x: simplex[argmin].clone(), value: values[argmin], iterations, converged }
}
