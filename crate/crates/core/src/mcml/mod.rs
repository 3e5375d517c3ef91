//! Monte Carlo maximum likelihood for (β, σ², φ): importance-ratio objective,
//! analytic derivatives, bounded Newton maximization per φ, the outer ψ₀ loop and
//! the profile-likelihood interval for φ.

mod fit;
mod glm;
mod objective;
mod optim;
mod spline;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdaError};
use crate::latent::LatentChainConfig;

pub use fit::{fit, profile_ci, FitResult, ProfilePoint, DEVIANCE_CUTOFF_95};
pub use glm::poisson_glm;
pub use objective::{mc_loglik, mc_loglik_grad_hess, GradHess, LogLikRatio, McmlObjective, PhiTerms};
pub use optim::{maximize_bounded, OptimOutcome};
pub use spline::NaturalCubicSpline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub phi: f64,
}

impl ModelParams {
    pub fn new(beta: Vec<f64>, sigma2: f64, phi: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(SdaError::Domain(format!("sigma2 must be positive, got {sigma2}")));
        }
        if !(phi > 0.0) {
            return Err(SdaError::Domain(format!("phi must be positive, got {phi}")));
        }
        Ok(ModelParams { beta, sigma2, phi })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Optimization coordinates `(β, log σ²)`.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.beta.clone();
        t.push(self.sigma2.ln());
        t
    }

    pub fn from_theta(theta: &[f64], phi: f64) -> Self {
        let p = theta.len() - 1;
        ModelParams {
            beta: theta[..p].to_vec(),
            sigma2: theta[p].exp(),
            phi,
        }
    }

    /// Largest relative change over β, σ² and φ; the denominator is floored at 1.
    pub fn max_rel_change(&self, other: &ModelParams) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        self.beta
            .iter()
            .zip(&other.beta)
            .map(|(&a, &b)| rel(a, b))
            .chain([rel(self.sigma2, other.sigma2), rel(self.phi, other.phi)])
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmlConfig {
    /// Chain settings; retained draws N = (n_iter − burn_in) / thin.
    pub chain: LatentChainConfig,
    pub outer_iters: usize,
    pub param_tol: f64,
    pub log_sigma2_bounds: (f64, f64),
    /// ESS below this fraction of N raises a degeneracy warning.
    pub ess_warn_fraction: f64,
}

impl Default for McmlConfig {
    fn default() -> Self {
        McmlConfig {
            chain: LatentChainConfig::default(),
            outer_iters: 3,
            param_tol: 1e-3,
            log_sigma2_bounds: (-10.0, 10.0),
            ess_warn_fraction: 0.01,
        }
    }
}

impl McmlConfig {
    pub fn n_samples(&self) -> usize {
        self.chain.retained()
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.n_samples() < 1000 {
            return Err(SdaError::Config(format!(
                "MCML needs at least 1000 retained draws, chain gives {}",
                self.n_samples()
            )));
        }
        if self.outer_iters == 0 {
            return Err(SdaError::Config("outer_iters must be >= 1".into()));
        }
        if !(self.param_tol > 0.0) {
            return Err(SdaError::Config("param_tol must be positive".into()));
        }
        let (lo, hi) = self.log_sigma2_bounds;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(SdaError::Config("log sigma2 bounds must be finite with lo < hi".into()));
        }
        Ok(())
    }
}
