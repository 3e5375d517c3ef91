use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_ITER: usize = 200;
const GRAD_TOL: f64 = 1e-7;

/// Maximizes `f` over the box `[lower, upper]` with damped Newton steps.
///
/// `f` returns value, gradient and Hessian. Coordinates pinned at a bound with
/// the gradient pointing outward are held fixed for the step (active set);
/// the damping λ follows the Levenberg–Marquardt schedule.
pub fn maximize_bounded<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64]) -> OptimOutcome
where
    F: Fn(&[f64]) -> (f64, DVector<f64>, DMatrix<f64>),
{
    let d = x0.len();
    let clamp = |x: &mut [f64]| {
        for i in 0..d {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let (mut val, mut grad, mut hess) = f(&x);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        let free: Vec<usize> = (0..d)
            .filter(|&i| !((x[i] <= lower[i] && grad[i] < 0.0) || (x[i] >= upper[i] && grad[i] > 0.0)))
            .collect();
        let pg = free.iter().map(|&i| grad[i].abs()).fold(0.0, f64::max);
        if free.is_empty() || pg < GRAD_TOL {
            converged = true;
            break;
        }
        let k = free.len();
        let mut a = DMatrix::from_fn(k, k, |r, c| -hess[(free[r], free[c])]);
        let b = DVector::from_fn(k, |r, _| grad[free[r]]);
        for r in 0..k {
            a[(r, r)] += lambda * a[(r, r)].abs().max(1.0);
        }
        let step = match Cholesky::<f64, Dyn>::new(a) {
            Some(c) => c.solve(&b),
            None => {
                lambda *= 10.0;
                if lambda > 1e12 {
                    break;
                }
                continue;
            }
        };
        let mut cand = x.clone();
        for (r, &i) in free.iter().enumerate() {
            cand[i] += step[r];
        }
        clamp(&mut cand);
        let (cv, cg, ch) = f(&cand);
        if cv.is_finite() && cv >= val {
            let moved = cand.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = 1.0 + x.iter().map(|v| v.abs()).fold(0.0, f64::max);
            x = cand;
            val = cv;
            grad = cg;
            hess = ch;
            lambda = (lambda / 10.0).max(1e-12);
            if moved <= 1e-12 * scale {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // no ascent possible at machine precision
                converged = pg < 1e-4;
                break;
            }
        }
    }
    OptimOutcome {
        x,
        value: val,
        gradient: grad,
        hessian: hess,
        iterations,
        converged,
    }
}
