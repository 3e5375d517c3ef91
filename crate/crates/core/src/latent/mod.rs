//! The conditional distribution of the linear predictor η given the counts:
//! Laplace mode finding and MALA sampling of standardized effects.

mod mala;
mod mode;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariance::CacheEntry;
use crate::error::{Result, SdaError};
use crate::mcml::ModelParams;

pub use mala::run_mala;
pub use mode::{conditional_mode, LaplaceMode};

/// Counts, offsets and region-level design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DataVector {
    pub y: Vec<u64>,
    /// Offsets m_i > 0.
    pub offsets: Vec<f64>,
    /// n × p design; first column is the intercept.
    pub design: DMatrix<f64>,
}

impl DataVector {
    pub fn new(y: Vec<u64>, offsets: Vec<f64>, design: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if offsets.len() != n || design.nrows() != n {
            return Err(SdaError::Shape(format!(
                "{} counts, {} offsets, {} design rows",
                n,
                offsets.len(),
                design.nrows()
            )));
        }
        if n == 0 || design.ncols() == 0 {
            return Err(SdaError::Shape("empty data".into()));
        }
        if let Some(i) = offsets.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
            return Err(SdaError::Domain(format!("offset {i} is {} (must be > 0)", offsets[i])));
        }
        Ok(DataVector { y, offsets, design })
    }

    /// Intercept-only design.
    pub fn intercept_only(y: Vec<u64>, offsets: Vec<f64>) -> Result<Self> {
        let n = y.len();
        DataVector::new(y, offsets, DMatrix::from_element(n, 1, 1.0))
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub(crate) fn y_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.y.iter().map(|&v| v as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial MALA step size h; `None` uses 1.65 / n^{1/6}.
    pub step_size: Option<f64>,
    /// Tune h toward `target_acceptance` during burn-in.
    pub adapt: bool,
    pub target_acceptance: f64,
}

impl Default for LatentChainConfig {
    fn default() -> Self {
        LatentChainConfig {
            n_iter: 110_000,
            burn_in: 10_000,
            thin: 10,
            step_size: None,
            adapt: true,
            target_acceptance: 0.574,
        }
    }
}

impl LatentChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iter {
            return Err(SdaError::Config("burn_in must be smaller than n_iter".into()));
        }
        if self.thin == 0 {
            return Err(SdaError::Config("thin must be >= 1".into()));
        }
        if self.step_size.is_some_and(|h| !(h > 0.0)) {
            return Err(SdaError::Config("step size must be positive".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(SdaError::Config("target acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Retained draws: `(n_iter − burn_in) / thin`.
    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Retained MCMC draws of η.
#[derive(Debug, Clone)]
pub struct LatentSample {
    /// n × N; column j is the j-th retained draw.
    pub draws: DMatrix<f64>,
    /// Post-burn-in acceptance fraction.
    pub acceptance_rate: f64,
    pub eta_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    /// Step size used after burn-in.
    pub step_size: f64,
    /// Iteration number of each retained draw and whether that move was accepted.
    pub retained: Vec<(usize, bool)>,
    pub warning: Option<String>,
}

impl LatentSample {
    pub fn n_draws(&self) -> usize {
        self.draws.ncols()
    }

    pub fn n(&self) -> usize {
        self.draws.nrows()
    }

    /// Writes `iter,eta_1..eta_n,accepted` for every retained draw.
    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("iter".to_string())
            .chain((1..=self.n()).map(|i| format!("eta_{i}")))
            .chain(std::iter::once("accepted".to_string()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (j, &(iter, accepted)) in self.retained.iter().enumerate() {
            write!(w, "{iter}")?;
            for v in self.draws.column(j).iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", u8::from(accepted))?;
        }
        Ok(())
    }
}

/// Log conditional density of η given y (up to a constant) and its gradient.
pub struct LatentTarget<'a> {
    y: DVector<f64>,
    offsets: &'a [f64],
    mean: DVector<f64>,
    /// Σ⁻¹ = R(φ)⁻¹ / σ².
    precision: DMatrix<f64>,
}

impl<'a> LatentTarget<'a> {
    pub fn new(data: &'a DataVector, params: &ModelParams, entry: &CacheEntry) -> Result<Self> {
        if entry.n() != data.n() {
            return Err(SdaError::Shape(format!(
                "cache entry is {}x{} but data has {} regions",
                entry.n(),
                entry.n(),
                data.n()
            )));
        }
        if (entry.phi - params.phi).abs() > 1e-9 * params.phi.abs().max(1.0) {
            return Err(SdaError::Config(format!(
                "cache entry phi={} does not match params phi={}",
                entry.phi, params.phi
            )));
        }
        if params.beta.len() != data.p() {
            return Err(SdaError::Shape(format!(
                "beta has {} entries, design has {} columns",
                params.beta.len(),
                data.p()
            )));
        }
        if !(params.sigma2 > 0.0) {
            return Err(SdaError::Domain("sigma2 must be positive".into()));
        }
        let beta = DVector::from_column_slice(&params.beta);
        Ok(LatentTarget {
            y: data.y_f64(),
            offsets: &data.offsets,
            mean: &data.design * beta,
            precision: &entry.inverse / params.sigma2,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_density(&self, eta: &DVector<f64>) -> f64 {
        self.eval(eta).0
    }

    /// `(log density, gradient)` at η.
    pub fn eval(&self, eta: &DVector<f64>) -> (f64, DVector<f64>) {
        let resid = eta - &self.mean;
        let q_resid = &self.precision * &resid;
        let mut lp = -0.5 * resid.dot(&q_resid);
        let mut grad = -q_resid;
        for i in 0..self.n() {
            let mu = self.offsets[i] * eta[i].exp();
            lp += self.y[i] * eta[i] - mu;
            grad[i] += self.y[i] - mu;
        }
        (lp, grad)
    }

    /// Negative Hessian `Σ⁻¹ + diag(m e^η)`.
    pub fn neg_hessian(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        let mut h = self.precision.clone();
        for i in 0..self.n() {
            h[(i, i)] += self.offsets[i] * eta[i].exp();
        }
        h
    }
}
