//! Natural cubic spline regression basis.
//!
//! Interior knots sit at equally spaced quantiles of the data, boundary knots
//! at the min and max. The `df` basis functions are the cardinal natural
//! splines on those knots with the first one dropped (its span plus an
//! intercept equals the full natural-spline space), so each function is cubic
//! between knots, C2 at knots, and continues linearly outside the boundary.

use crate::numeric::cubic::NaturalCubic;
use crate::numeric::stats::quantile;
use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Error, Debug)]
pub enum SplineError {
    #[error("need df >= 2, got {0}")]
    BadDf(usize),
    #[error("too few distinct values: {distinct} (need at least {need})")]
    DegenerateData { distinct: usize, need: usize },
}

#[derive(Debug, Clone)]
pub struct SplineBasis {
    pub df: usize,
    pub interior_knots: Vec<f64>,
    pub boundary_knots: (f64, f64),
    /// n-by-df design block evaluated at the construction data.
    pub basis: DMatrix<f64>,
    functions: Vec<NaturalCubic>,
}

impl SplineBasis {
    /// All knots in increasing order (boundary, interior, boundary).
    pub fn knots(&self) -> Vec<f64> {
        let mut k = vec![self.boundary_knots.0];
        k.extend_from_slice(&self.interior_knots);
        k.push(self.boundary_knots.1);
        k
    }

    /// Evaluates the basis functions at an arbitrary point (linear beyond the
    /// boundary knots).
    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.functions.iter().map(|f| f.eval(x)).collect()
    }

    pub fn second_deriv(&self, x: f64) -> Vec<f64> {
        self.functions.iter().map(|f| f.second_deriv(x)).collect()
    }
}

/// Builds the df-column natural spline basis over `x`.
pub fn natural_spline_basis(x: &[f64], df: usize) -> Result<SplineBasis, SplineError> {
    if df < 2 {
        return Err(SplineError::BadDf(df));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.dedup();
    if sorted.len() < df + 1 {
        return Err(SplineError::DegenerateData { distinct: sorted.len(), need: df + 1 });
    }
    let lo = sorted[0];
    let hi = sorted[sorted.len() - 1];
    let mut knots = vec![lo];
    for k in 1..df {
        knots.push(quantile(&sorted, k as f64 / df as f64));
    }
    knots.push(hi);
    knots.dedup();
    if knots.len() != df + 1 {
        return Err(SplineError::DegenerateData { distinct: knots.len(), need: df + 1 });
    }
    let interior_knots = knots[1..df].to_vec();

    // cardinal natural splines, dropping the first so the block is linearly
    // independent of an intercept
    let mut functions = Vec::with_capacity(df);
    for j in 1..=df {
        let mut ind = vec![0.0; df + 1];
        ind[j] = 1.0;
        functions.push(NaturalCubic::fit(&knots, &ind));
    }

    let n = x.len();
    let mut basis = DMatrix::zeros(n, df);
    for (i, &xi) in x.iter().enumerate() {
        for (j, f) in functions.iter().enumerate() {
            basis[(i, j)] = f.eval(xi);
        }
    }
    Ok(SplineBasis { df, interior_knots, boundary_knots: (lo, hi), basis, functions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};

    /// Independent oracle: evaluates cardinal natural spline `j` at `t` by
    /// solving the full piecewise-cubic constraint system (4 unknowns per
    /// interval; interpolation, C1/C2 continuity, natural ends) densely.
    fn oracle_cardinal(knots: &[f64], j: usize, t: f64) -> f64 {
        let k = knots.len();
        let segs = k - 1;
        let unknowns = 4 * segs;
        let mut a = DMatrix::<f64>::zeros(unknowns, unknowns);
        let mut b = DVector::<f64>::zeros(unknowns);
        let mut row = 0;
        let coeff = |seg: usize, pow: usize| 4 * seg + pow;
        // interpolation at both ends of every segment
        for s in 0..segs {
            for (end, idx) in [(knots[s], s), (knots[s + 1], s + 1)] {
                let d = end - knots[s];
                for p in 0..4 {
                    a[(row, coeff(s, p))] = d.powi(p as i32);
                }
                b[row] = if idx == j { 1.0 } else { 0.0 };
                row += 1;
            }
        }
        // first and second derivative continuity at interior knots
        for s in 0..segs - 1 {
            let d = knots[s + 1] - knots[s];
            a[(row, coeff(s, 1))] = 1.0;
            a[(row, coeff(s, 2))] = 2.0 * d;
            a[(row, coeff(s, 3))] = 3.0 * d * d;
            a[(row, coeff(s + 1, 1))] = -1.0;
            row += 1;
            a[(row, coeff(s, 2))] = 2.0;
            a[(row, coeff(s, 3))] = 6.0 * d;
            a[(row, coeff(s + 1, 2))] = -2.0;
            row += 1;
        }
        // natural end conditions
        a[(row, coeff(0, 2))] = 2.0;
        row += 1;
        let dl = knots[k - 1] - knots[k - 2];
        a[(row, coeff(segs - 1, 2))] = 2.0;
        a[(row, coeff(segs - 1, 3))] = 6.0 * dl;
        row += 1;
        assert_eq!(row, unknowns);
        let sol = a.lu().solve(&b).expect("oracle system solvable");
        // locate segment (clamp into the knot span; callers stay inside here)
        let s = (0..segs)
            .find(|&s| t <= knots[s + 1])
            .unwrap_or(segs - 1);
        let d = t - knots[s];
        (0..4).map(|p| sol[coeff(s, p)] * d.powi(p as i32)).sum()
    }

    #[test]
    fn df5_on_256_points_has_5_columns() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..100.0)).collect();
        let basis = natural_spline_basis(&x, 5).unwrap();
        assert_eq!(basis.basis.nrows(), 256);
        assert_eq!(basis.basis.ncols(), 5);
    }

    #[test]
    fn second_derivative_vanishes_outside_boundaries() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(-3.0..7.0)).collect();
        let basis = natural_spline_basis(&x, 5).unwrap();
        let (lo, hi) = basis.boundary_knots;
        for probe in [lo - 1.0, hi + 1.0, lo - 10.0, hi + 2.5] {
            for d2 in basis.second_deriv(probe) {
                assert!(d2.abs() < 1e-8, "second derivative {d2} at {probe}");
            }
        }
    }

    #[test]
    fn matches_constrained_linear_system_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..10.0)).collect();
        let basis = natural_spline_basis(&x, 5).unwrap();
        let knots = basis.knots();
        for p in 0..10 {
            let t = knots[0] + (knots[5] - knots[0]) * (p as f64 + 0.5) / 10.0;
            let ours = basis.eval(t);
            for (j, v) in ours.iter().enumerate() {
                let want = oracle_cardinal(&knots, j + 1, t);
                assert!((v - want).abs() < 1e-8, "basis {j} at {t}: {v} vs {want}");
            }
        }
    }

    #[test]
    fn columns_are_linearly_independent_with_intercept() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..1.0)).collect();
        let basis = natural_spline_basis(&x, 5).unwrap();
        let n = x.len();
        let mut design = DMatrix::zeros(n, 6);
        for i in 0..n {
            design[(i, 0)] = 1.0;
            for j in 0..5 {
                design[(i, j + 1)] = basis.basis[(i, j)];
            }
        }
        assert_eq!(design.rank(1e-8), 6);
    }

    #[test]
    fn degenerate_data_rejected() {
        let x = vec![1.0; 50];
        assert!(matches!(
            natural_spline_basis(&x, 5),
            Err(SplineError::DegenerateData { .. })
        ));
        assert!(matches!(natural_spline_basis(&[1.0, 2.0, 3.0], 1), Err(SplineError::BadDf(1))));
    }
}
