use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{DataVector, LatentTarget};
use crate::covariance::CacheEntry;
use crate::error::{Result, SdaError};
use crate::mcml::ModelParams;

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;

/// Laplace approximation of the conditional distribution of η given y.
#[derive(Debug, Clone)]
pub struct LaplaceMode {
    pub eta_hat: DVector<f64>,
    /// `(Σ⁻¹ + diag(m e^η̂))⁻¹`.
    pub sigma_hat: DMatrix<f64>,
    /// Lower Cholesky factor of `sigma_hat`.
    pub sigma_hat_chol: DMatrix<f64>,
    pub iterations: usize,
    /// Max-norm of the gradient at the returned mode.
    pub gradient_norm: f64,
}

/// Newton iterations with step halving on the strictly concave log conditional density.
///
/// Stops when the gradient max-norm drops below 1e-8, or when Newton steps
/// stall at rounding level (which happens when Σ⁻¹ is huge and the gradient
/// cannot be resolved to 1e-8 in absolute terms).
pub fn conditional_mode(data: &DataVector, params: &ModelParams, entry: &CacheEntry) -> Result<LaplaceMode> {
    let target = LatentTarget::new(data, params, entry)?;
    let mut eta = target.mean().clone();
    let (mut lp, mut grad) = target.eval(&eta);

    for iter in 0..=MAX_ITER {
        let gnorm = grad.amax();
        if gnorm < GRAD_TOL {
            return finish(&target, eta, iter, gnorm);
        }
        if iter == MAX_ITER {
            break;
        }
        let h = target.neg_hessian(&eta);
        let chol = Cholesky::<f64, Dyn>::new(h)
            .ok_or_else(|| SdaError::Convergence("negative Hessian lost positive definiteness".into()))?;
        let step = chol.solve(&grad);

        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..60 {
            let cand = &eta + &step * t;
            let (cand_lp, cand_grad) = target.eval(&cand);
            if cand_lp.is_finite() && cand_lp >= lp {
                let moved = (&cand - &eta).amax();
                eta = cand;
                lp = cand_lp;
                grad = cand_grad;
                improved = true;
                if moved <= 1e-14 * (1.0 + eta.amax()) {
                    return finish(&target, eta, iter + 1, grad.amax());
                }
                break;
            }
            t *= 0.5;
        }
        if !improved {
            // no ascent along the Newton direction: the mode is resolved to rounding
            return finish(&target, eta, iter + 1, grad.amax());
        }
    }
    Err(SdaError::Convergence(format!(
        "conditional mode not found in {MAX_ITER} Newton iterations (gradient {:e})",
        grad.amax()
    )))
}

fn finish(target: &LatentTarget<'_>, eta: DVector<f64>, iterations: usize, gradient_norm: f64) -> Result<LaplaceMode> {
    let h = target.neg_hessian(&eta);
    let sigma_hat = Cholesky::<f64, Dyn>::new(h)
        .ok_or_else(|| SdaError::Convergence("negative Hessian at mode is not positive definite".into()))?
        .inverse();
    let sigma_hat = (&sigma_hat + sigma_hat.transpose()) * 0.5;
    let sigma_hat_chol = Cholesky::<f64, Dyn>::new(sigma_hat.clone())
        .ok_or_else(|| SdaError::Convergence("Laplace covariance is not positive definite".into()))?
        .l();
    Ok(LaplaceMode {
        eta_hat: eta,
        sigma_hat,
        sigma_hat_chol,
        iterations,
        gradient_norm,
    })
}
