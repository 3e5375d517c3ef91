use nalgebra::{Cholesky, DVector, Dyn};

use crate::error::{Result, SdaError};
use crate::latent::DataVector;

/// Poisson log-linear regression with offsets `log m`, fitted by IRLS.
/// Spatial correlation is ignored; used only to initialize ψ₀.
pub fn poisson_glm(data: &DataVector) -> Result<Vec<f64>> {
    let n = data.n();
    let p = data.p();
    let d = &data.design;
    let y = data.y_f64();
    let total_y: f64 = y.sum();
    let total_m: f64 = data.offsets.iter().sum();
    let mut beta = DVector::zeros(p);
    beta[0] = ((total_y + 0.5) / total_m).ln();

    for _ in 0..100 {
        let eta = d * &beta;
        let mut w = DVector::zeros(n);
        let mut z = DVector::zeros(n);
        for i in 0..n {
            let mu = (data.offsets[i] * eta[i].exp()).max(1e-300);
            w[i] = mu;
            z[i] = eta[i] + (y[i] - mu) / mu;
        }
        let mut dtwd = nalgebra::DMatrix::zeros(p, p);
        let mut dtwz = DVector::zeros(p);
        for i in 0..n {
            let row = d.row(i).transpose();
            dtwd.ger(w[i], &row, &row, 1.0);
            dtwz.axpy(w[i] * z[i], &row, 1.0);
        }
        let new = Cholesky::<f64, Dyn>::new(dtwd)
            .ok_or_else(|| SdaError::Convergence("Poisson GLM: design is rank deficient".into()))?
            .solve(&dtwz);
        let change = (&new - &beta).amax();
        beta = new;
        if !beta.iter().all(|b| b.is_finite()) {
            return Err(SdaError::Convergence("Poisson GLM diverged".into()));
        }
        if change < 1e-10 * (1.0 + beta.amax()) {
            return Ok(beta.iter().copied().collect());
        }
    }
    Err(SdaError::Convergence("Poisson GLM did not converge in 100 IRLS iterations".into()))
}
