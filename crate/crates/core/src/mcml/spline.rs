use crate::error::{Result, SdaError};

/// Natural cubic spline interpolant (zero second derivative at both ends).
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() || n < 2 {
            return Err(SdaError::Shape("spline needs at least two (x, y) knots".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SdaError::Domain("spline knots must be strictly increasing".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut sub = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                sub[i - 1] = h0;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for i in 1..k {
                let sup = x[i + 1] - x[i];
                let f = sub[i] / diag[i - 1];
                diag[i] -= f * sup;
                rhs[i] -= f * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                let sup = x[i + 2] - x[i + 1];
                m[i + 1] = (rhs[i] - sup * m[i + 2]) / diag[i];
            }
        }
        Ok(NaturalCubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    /// Evaluates the spline; outside the knot range it extends linearly.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let (x, y, m) = (&self.x, &self.y, &self.m);
        if t <= x[0] {
            let h = x[1] - x[0];
            let slope = (y[1] - y[0]) / h - h * (2.0 * m[0] + m[1]) / 6.0;
            return y[0] + slope * (t - x[0]);
        }
        if t >= x[n - 1] {
            let h = x[n - 1] - x[n - 2];
            let slope = (y[n - 1] - y[n - 2]) / h + h * (m[n - 2] + 2.0 * m[n - 1]) / 6.0;
            return y[n - 1] + slope * (t - x[n - 1]);
        }
        let i = x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - t) / h;
        let b = (t - x[i]) / h;
        a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_linear_functions() {
        let x = [0.0, 1.0, 2.5, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let s = NaturalCubicSpline::new(&x, &y).unwrap();
        for t in [0.3, 1.7, 3.9, 5.0, -1.0] {
            assert!((s.eval(t) - (3.0 * t - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_hand_solved_three_knot_case() {
        // knots (0,0), (1,1), (2,0): M1 = 6·(−1 − 1)/4 = −3
        let s = NaturalCubicSpline::new(&[0.0, 1.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        // on [0,1]: S(t) = t + (t³ − t)(−3)/6
        let t = 0.5;
        assert!((s.eval(t) - (t - 0.5 * (t * t * t - t))).abs() < 1e-14);
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(NaturalCubicSpline::new(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(NaturalCubicSpline::new(&[0.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn passes_through_knots(ys in prop::collection::vec(-100.0..100.0f64, 2..30)) {
            let xs: Vec<f64> = (0..ys.len()).map(|i| 50.0 + 37.5 * i as f64 + (i as f64).sqrt()).collect();
            let s = NaturalCubicSpline::new(&xs, &ys).unwrap();
            for (x, y) in xs.iter().zip(&ys) {
                prop_assert!((s.eval(*x) - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }
}
