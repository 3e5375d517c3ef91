use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SdaError};
use crate::raster::GridSpec;
use crate::seed;

/// Largest grid the dense Cholesky simulator accepts.
pub const MAX_GRF_CELLS: usize = 20_000;

/// Zero-mean Gaussian field with covariance σ² exp(−d/φ) on cell centers.
/// The Cholesky factor is computed once and reused for every draw.
pub struct GrfSimulator {
    grid: GridSpec,
    sigma: f64,
    phi: f64,
    factor: Option<DMatrix<f64>>,
}

impl GrfSimulator {
    pub fn new(grid: GridSpec, sigma: f64, phi: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(SdaError::Domain(format!("field sd must be >= 0, got {sigma}")));
        }
        if !(phi > 0.0) {
            return Err(SdaError::Domain(format!("phi must be positive, got {phi}")));
        }
        let n = grid.len();
        if n > MAX_GRF_CELLS {
            return Err(SdaError::Size(format!(
                "{n} field cells exceed the dense simulation limit of {MAX_GRF_CELLS}; use a coarser grid"
            )));
        }
        let factor = if sigma == 0.0 {
            None
        } else {
            let centers: Vec<_> = (0..n).map(|i| grid.center_of(i)).collect();
            let cov = DMatrix::from_fn(n, n, |i, j| (-centers[i].dist(centers[j]) / phi).exp());
            Some(factor_with_jitter(cov, phi)? * sigma)
        };
        Ok(GrfSimulator {
            grid,
            sigma,
            phi,
            factor,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// One field realization, row-major over the grid.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let n = self.grid.len();
        match &self.factor {
            None => vec![0.0; n],
            Some(l) => {
                let mut rng = seed::rng(seed);
                let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                (l * z).iter().copied().collect()
            }
        }
    }
}

fn factor_with_jitter(cov: DMatrix<f64>, phi: f64) -> Result<DMatrix<f64>> {
    let mut jitter = 0.0;
    loop {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::<f64, Dyn>::new(m) {
            return Ok(c.l());
        }
        jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
        if jitter > 1.000_001e-6 {
            return Err(SdaError::NumericalDegeneracy {
                phi,
                message: "field covariance is not positive definite".into(),
            });
        }
    }
}

/// Convenience wrapper building a one-off simulator.
pub fn simulate_grf(grid: GridSpec, sigma: f64, phi: f64, seed: u64) -> Result<Vec<f64>> {
    Ok(GrfSimulator::new(grid, sigma, phi)?.sample(seed))
}
