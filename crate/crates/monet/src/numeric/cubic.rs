//! Natural cubic spline interpolation.
//!
//! The interpolant is C2 on the knot span with zero second derivative at the
//! end knots and is continued linearly outside. Used both for EMD envelopes
//! and as the backbone of the natural-spline regression basis.

/// Natural cubic spline through `(x_i, y_i)` with strictly increasing knots.
#[derive(Debug, Clone)]
pub struct NaturalCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots (zero at both ends).
    m: Vec<f64>,
}

impl NaturalCubic {
    /// Panics if fewer than 2 knots or knots are not strictly increasing.
    pub fn fit(x: &[f64], y: &[f64]) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(x.len() >= 2, "need at least two knots");
        assert!(x.windows(2).all(|w| w[1] > w[0]), "knots must be strictly increasing");
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (Thomas algorithm)
            let k = n - 2;
            let mut sub = vec![0.0; k];
            let mut diag = vec![0.0; k];
            let mut sup = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                sub[i] = h0;
                diag[i] = 2.0 * (h0 + h1);
                sup[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                sol[i] = (rhs[i] - sup[i] * sol[i + 1]) / diag[i];
            }
            m[1..=k].copy_from_slice(&sol);
        }
        Self { x: x.to_vec(), y: y.to_vec(), m }
    }

    fn segment(&self, t: f64) -> usize {
        match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(self.x.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.x.len() - 2),
        }
    }

    /// Spline value, linearly extrapolated beyond the end knots.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] {
            return self.y[0] + self.deriv_at_knot(0) * (t - self.x[0]);
        }
        if t > self.x[n - 1] {
            return self.y[n - 1] + self.deriv_at_knot(n - 1) * (t - self.x[n - 1]);
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// First derivative (constant beyond the end knots).
    pub fn deriv(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] {
            return self.deriv_at_knot(0);
        }
        if t > self.x[n - 1] {
            return self.deriv_at_knot(n - 1);
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h
            + ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]) * h / 6.0
    }

    /// Second derivative (zero outside [first, last] knot).
    pub fn second_deriv(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] || t > self.x[n - 1] {
            return 0.0;
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.m[i] + b * self.m[i + 1]
    }

    fn deriv_at_knot(&self, i: usize) -> f64 {
        let n = self.x.len();
        if i == 0 {
            let h = self.x[1] - self.x[0];
            (self.y[1] - self.y[0]) / h - h / 6.0 * (2.0 * self.m[0] + self.m[1])
        } else {
            let h = self.x[n - 1] - self.x[n - 2];
            (self.y[n - 1] - self.y[n - 2]) / h + h / 6.0 * (self.m[n - 2] + 2.0 * self.m[n - 1])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interpolates_knots_exactly() {
        let x = [0.0, 1.0, 2.5, 4.0, 5.0];
        let y = [1.0, -0.5, 2.0, 0.3, 1.1];
        let s = NaturalCubic::fit(&x, &y);
        for (xi, yi) in x.iter().zip(y.iter()) {
            assert_relative_eq!(s.eval(*xi), *yi, epsilon = 1e-12);
        }
    }

    #[test]
    fn natural_end_conditions() {
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).sin()).collect();
        let s = NaturalCubic::fit(&x, &y);
        assert!(s.second_deriv(0.0).abs() < 1e-10);
        assert!(s.second_deriv(7.0).abs() < 1e-10);
        assert_eq!(s.second_deriv(-3.0), 0.0);
        assert_eq!(s.second_deriv(9.0), 0.0);
    }

    #[test]
    fn linear_data_is_reproduced_everywhere() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let s = NaturalCubic::fit(&x, &y);
        for t in [-2.0, 0.3, 1.7, 2.9, 5.0] {
            assert_relative_eq!(s.eval(t), 1.0 + 2.0 * t, epsilon = 1e-12);
            assert_relative_eq!(s.deriv(t), 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.9).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.5).cos() + 0.1 * v).collect();
        let s = NaturalCubic::fit(&x, &y);
        let h = 1e-6;
        for t in [0.4, 2.1, 5.5, 7.9] {
            let fd = (s.eval(t + h) - s.eval(t - h)) / (2.0 * h);
            assert_relative_eq!(s.deriv(t), fd, max_relative = 1e-6);
        }
    }
}
