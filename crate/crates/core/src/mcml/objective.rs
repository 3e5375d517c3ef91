use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::ModelParams;
use crate::covariance::{CacheEntry, CovarianceCache};
use crate::error::{Result, SdaError};
use crate::latent::{DataVector, LatentSample};
use crate::stats::log_sum_exp;

/// Monte Carlo log-likelihood ratio `log L_N(ψ) − log L_N(ψ₀)` with its effective sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikRatio {
    pub value: f64,
    pub ess: f64,
    pub warning: Option<String>,
}

/// Value, gradient and Hessian in `(β, log σ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHess {
    pub value: LogLikRatio,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Draw-dependent quantities for one φ: `Z = L⁻¹H` and `G = L⁻¹D`, with `R(φ) = LLᵀ`.
pub struct PhiTerms {
    pub phi: f64,
    log_det: f64,
    z: DMatrix<f64>,
    g: DMatrix<f64>,
    gtg: DMatrix<f64>,
}

impl PhiTerms {
    pub fn new(entry: &CacheEntry, draws: &DMatrix<f64>, design: &DMatrix<f64>) -> Result<Self> {
        let n = entry.n();
        if draws.nrows() != n || design.nrows() != n {
            return Err(SdaError::Shape(format!(
                "cache entry has {n} regions, draws {} rows, design {} rows",
                draws.nrows(),
                design.nrows()
            )));
        }
        let l = &entry.chol;
        let z = l
            .solve_lower_triangular(draws)
            .ok_or_else(|| SdaError::NumericalDegeneracy {
                phi: entry.phi,
                message: "singular Cholesky factor".into(),
            })?;
        let g = l
            .solve_lower_triangular(design)
            .ok_or_else(|| SdaError::NumericalDegeneracy {
                phi: entry.phi,
                message: "singular Cholesky factor".into(),
            })?;
        let gtg = g.tr_mul(&g);
        Ok(PhiTerms {
            phi: entry.phi,
            log_det: entry.log_det,
            z,
            g,
            gtg,
        })
    }

    fn n(&self) -> usize {
        self.z.nrows()
    }

    /// Per-draw `log f(η_j; β, σ², φ)`, squared Mahalanobis terms `q_j`, and
    /// optionally `Gᵀ r_j` (p × N) where `r_j = z_j − Gβ`.
    fn eval(&self, theta: &[f64], derivs: bool) -> (Vec<f64>, Vec<f64>, Option<DMatrix<f64>>) {
        let p = self.g.ncols();
        let beta = DVector::from_column_slice(&theta[..p]);
        let tau = theta[p];
        let n = self.n() as f64;
        let gb = &self.g * &beta;
        let mut resid = self.z.clone();
        for mut col in resid.column_iter_mut() {
            col -= &gb;
        }
        let inv_s2 = (-tau).exp();
        let base = -0.5 * n * tau - 0.5 * self.log_det - 0.5 * n * (2.0 * PI).ln();
        let q: Vec<f64> = resid.column_iter().map(|c| c.norm_squared()).collect();
        let l = q.iter().map(|&qj| base - 0.5 * inv_s2 * qj).collect();
        let gtr = derivs.then(|| self.g.tr_mul(&resid));
        (l, q, gtr)
    }
}

/// Importance-sampling objective for a fixed draw set generated at ψ₀.
pub struct McmlObjective<'a> {
    design: &'a DMatrix<f64>,
    draws: &'a DMatrix<f64>,
    params0: ModelParams,
    l0: Vec<f64>,
    ess_warn_fraction: f64,
}

impl<'a> McmlObjective<'a> {
    pub fn new(data: &'a DataVector, draws: &'a LatentSample, params0: &ModelParams, cache: &CovarianceCache) -> Result<Self> {
        McmlObjective::from_entry(data, draws, params0, cache.entry(params0.phi)?)
    }

    pub fn from_entry(data: &'a DataVector, draws: &'a LatentSample, params0: &ModelParams, entry0: &CacheEntry) -> Result<Self> {
        if params0.p() != data.p() {
            return Err(SdaError::Shape(format!("beta has {} entries, design {} columns", params0.p(), data.p())));
        }
        if draws.n_draws() == 0 {
            return Err(SdaError::Shape("no latent draws".into()));
        }
        let terms0 = PhiTerms::new(entry0, &draws.draws, &data.design)?;
        let (l0, _, _) = terms0.eval(&params0.theta(), false);
        Ok(McmlObjective {
            design: &data.design,
            draws: &draws.draws,
            params0: params0.clone(),
            l0,
            ess_warn_fraction: 0.01,
        })
    }

    pub fn with_ess_warn_fraction(mut self, fraction: f64) -> Self {
        self.ess_warn_fraction = fraction;
        self
    }

    pub fn params0(&self) -> &ModelParams {
        &self.params0
    }

    pub fn n_draws(&self) -> usize {
        self.l0.len()
    }

    pub fn phi_terms(&self, entry: &CacheEntry) -> Result<PhiTerms> {
        PhiTerms::new(entry, self.draws, self.design)
    }

    /// Returns the log ratios and normalized weights.
    fn weights(&self, l: &[f64]) -> (LogLikRatio, Vec<f64>) {
        let diff: Vec<f64> = l.iter().zip(&self.l0).map(|(a, b)| a - b).collect();
        let big_n = diff.len() as f64;
        let lse = log_sum_exp(&diff);
        let value = lse - big_n.ln();
        let w: Vec<f64> = diff.iter().map(|d| (d - lse).exp()).collect();
        let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
        let warning = (ess < self.ess_warn_fraction * big_n).then(|| {
            format!("importance weights degenerate: ESS {ess:.1} of {} draws", diff.len())
        });
        (LogLikRatio { value, ess, warning }, w)
    }

    pub fn value(&self, terms: &PhiTerms, theta: &[f64]) -> LogLikRatio {
        let (l, _, _) = terms.eval(theta, false);
        self.weights(&l).0
    }

    pub fn grad_hess(&self, terms: &PhiTerms, theta: &[f64]) -> GradHess {
        let p = terms.g.ncols();
        let n = terms.n() as f64;
        let inv_s2 = (-theta[p]).exp();
        let (l, q, gtr) = terms.eval(theta, true);
        let gtr = gtr.expect("derivatives requested");
        let (value, w) = self.weights(&l);

        let mut mean_g = DVector::zeros(p + 1);
        let mut outer = DMatrix::zeros(p + 1, p + 1);
        let mut mean_q = 0.0;
        let mut gj = DVector::zeros(p + 1);
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            for k in 0..p {
                gj[k] = inv_s2 * gtr[(k, j)];
            }
            gj[p] = -0.5 * n + 0.5 * inv_s2 * q[j];
            mean_g.axpy(wj, &gj, 1.0);
            outer.ger(wj, &gj, &gj, 1.0);
            mean_q += wj * q[j];
        }
        let mut mean_h = DMatrix::zeros(p + 1, p + 1);
        mean_h.view_mut((0, 0), (p, p)).copy_from(&(&terms.gtg * -inv_s2));
        for k in 0..p {
            mean_h[(k, p)] = -mean_g[k];
            mean_h[(p, k)] = -mean_g[k];
        }
        mean_h[(p, p)] = -0.5 * inv_s2 * mean_q;
        let mut hessian = mean_h + outer - &mean_g * mean_g.transpose();
        hessian = (&hessian + hessian.transpose()) * 0.5;
        GradHess {
            value,
            gradient: mean_g,
            hessian,
        }
    }
}

fn check(params: &ModelParams, params0: &ModelParams) -> Result<()> {
    if params.p() != params0.p() {
        return Err(SdaError::Shape("params and params0 differ in length".into()));
    }
    Ok(())
}

/// `log (1/N) Σ_j f(η_j; ψ) / f(η_j; ψ₀)` over draws generated at ψ₀.
pub fn mc_loglik(
    params: &ModelParams,
    params0: &ModelParams,
    draws: &LatentSample,
    data: &DataVector,
    cache: &CovarianceCache,
) -> Result<LogLikRatio> {
    check(params, params0)?;
    let obj = McmlObjective::new(data, draws, params0, cache)?;
    let terms = obj.phi_terms(cache.entry(params.phi)?)?;
    Ok(obj.value(&terms, &params.theta()))
}

/// Self-normalized importance-weighted gradient and Hessian in `(β, log σ²)`, φ fixed.
pub fn mc_loglik_grad_hess(
    params: &ModelParams,
    params0: &ModelParams,
    draws: &LatentSample,
    data: &DataVector,
    cache: &CovarianceCache,
) -> Result<GradHess> {
    check(params, params0)?;
    let obj = McmlObjective::new(data, draws, params0, cache)?;
    let terms = obj.phi_terms(cache.entry(params.phi)?)?;
    Ok(obj.grad_hess(&terms, &params.theta()))
}
