use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use super::{maximize_bounded, poisson_glm, McmlConfig, McmlObjective, ModelParams, NaturalCubicSpline, OptimOutcome};
use crate::covariance::CovarianceCache;
use crate::error::{Result, SdaError};
use crate::latent::{run_mala, DataVector};
use crate::{par, seed};

/// Half the 95% χ²₁ quantile: the log-likelihood drop that bounds the profile interval.
pub const DEVIANCE_CUTOFF_95: f64 = 1.920_729_410_347_062;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub phi: f64,
    /// Maximized log-likelihood ratio against the reference ψ₀ of the final iteration.
    pub loglik: f64,
    pub beta: Vec<f64>,
    pub sigma2: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub estimates: ModelParams,
    /// Covariance of β̂ from the negative inverse Hessian.
    pub beta_cov: Vec<Vec<f64>>,
    /// Covariance of (β̂, log σ̂²).
    pub param_cov: Vec<Vec<f64>>,
    pub phi_profile: Vec<ProfilePoint>,
    pub phi_ci_95: (f64, f64),
    /// Inner optimization at φ̂ converged and at least one φ had usable importance weights.
    pub converged: bool,
    /// Outer ψ₀ updates met `param_tol` before `outer_iters` ran out.
    pub outer_converged: bool,
    pub outer_iterations: usize,
    pub monte_carlo_n: usize,
    /// Reference parameters of the final draw set.
    pub psi0: ModelParams,
    pub acceptance_rates: Vec<f64>,
    pub ess: f64,
    pub warnings: Vec<String>,
    pub seed: u64,
    pub config: McmlConfig,
}

impl FitResult {
    pub fn param_cov_matrix(&self) -> DMatrix<f64> {
        let k = self.param_cov.len();
        DMatrix::from_fn(k, k, |i, j| self.param_cov[i][j])
    }
}

struct PhiFit {
    outcome: OptimOutcome,
    ess: f64,
    warning: Option<String>,
}

/// Fits (β, σ², φ) by Monte Carlo maximum likelihood with φ restricted to the cache grid.
pub fn fit(data: &DataVector, cache: &CovarianceCache, config: &McmlConfig, seed: u64) -> Result<FitResult> {
    config.validate()?;
    if cache.n() != data.n() {
        return Err(SdaError::Shape(format!(
            "cache covers {} regions, data has {}",
            cache.n(),
            data.n()
        )));
    }
    let grid = cache.grid();
    let p = data.p();
    let (tau_lo, tau_hi) = config.log_sigma2_bounds;
    let mut lower = vec![f64::NEG_INFINITY; p + 1];
    let mut upper = vec![f64::INFINITY; p + 1];
    lower[p] = tau_lo;
    upper[p] = tau_hi;

    let beta_glm = poisson_glm(data)?;
    let mut psi0 = ModelParams::new(beta_glm, 1.0f64.clamp(tau_lo.exp(), tau_hi.exp()), grid.median())?;
    let mut warnings = Vec::new();
    let mut acceptance_rates = Vec::new();
    let mut outer_converged = false;
    let mut last: Option<(ModelParams, Vec<PhiFit>, usize)> = None;

    for iter in 0..config.outer_iters {
        let chain_seed = seed::derive_index(seed, "mcml-chain", iter);
        let draws = run_mala(data, &psi0, cache.entry(psi0.phi)?, &config.chain, chain_seed)?;
        acceptance_rates.push(draws.acceptance_rate);
        if let Some(w) = &draws.warning {
            warnings.push(format!("outer iteration {}: {w}", iter + 1));
        }
        let obj = McmlObjective::new(data, &draws, &psi0, cache)?.with_ess_warn_fraction(config.ess_warn_fraction);
        let start = psi0.theta();

        let fits = par::try_map_range(grid.len(), |k| -> Result<PhiFit> {
            let terms = obj.phi_terms(cache.entry_at(k))?;
            let outcome = maximize_bounded(
                |theta| {
                    let gh = obj.grad_hess(&terms, theta);
                    (gh.value.value, gh.gradient, gh.hessian)
                },
                &start,
                &lower,
                &upper,
            );
            let v = obj.value(&terms, &outcome.x);
            Ok(PhiFit {
                outcome,
                ess: v.ess,
                warning: v.warning,
            })
        })?;

        let best = argmax(&fits);
        let psi_hat = ModelParams::from_theta(&fits[best].outcome.x, grid.values()[best]);
        let change = psi_hat.max_rel_change(&psi0);
        log::info!(
            "outer iteration {}: phi={} sigma2={:.4} beta={:?} (max rel change {change:.2e})",
            iter + 1,
            psi_hat.phi,
            psi_hat.sigma2,
            psi_hat.beta
        );
        last = Some((psi0.clone(), fits, iter + 1));
        psi0 = psi_hat;
        if change < config.param_tol {
            outer_converged = true;
            break;
        }
    }

    let (ref_params, fits, outer_iterations) = last.expect("at least one outer iteration");
    let best = argmax(&fits);
    let estimates = ModelParams::from_theta(&fits[best].outcome.x, grid.values()[best]);

    let all_degenerate = fits.iter().all(|f| f.warning.is_some());
    if all_degenerate {
        warnings.push("importance weights degenerate at every phi".into());
    }
    if let Some(w) = &fits[best].warning {
        warnings.push(format!("at phi={}: {w}", estimates.phi));
    }
    if !fits[best].outcome.converged {
        warnings.push(format!("inner optimization at phi={} did not converge", estimates.phi));
    }
    let converged = fits[best].outcome.converged && !all_degenerate;

    let phi_profile: Vec<ProfilePoint> = fits
        .iter()
        .zip(grid.values())
        .map(|(f, &phi)| {
            let p = ModelParams::from_theta(&f.outcome.x, phi);
            ProfilePoint {
                phi,
                loglik: f.outcome.value,
                beta: p.beta,
                sigma2: p.sigma2,
                ess: f.ess,
            }
        })
        .collect();
    let phi_ci_95 = if grid.len() >= 2 {
        let ys: Vec<f64> = phi_profile.iter().map(|q| q.loglik).collect();
        profile_ci(grid.values(), &ys, estimates.phi)?
    } else {
        (estimates.phi, estimates.phi)
    };

    let neg_h = -fits[best].outcome.hessian.clone();
    let cov = match Cholesky::<f64, Dyn>::new(neg_h.clone()) {
        Some(c) => c.inverse(),
        None => {
            warnings.push("negative Hessian at the optimum is not positive definite".into());
            neg_h
                .try_inverse()
                .ok_or_else(|| SdaError::Convergence("singular Hessian at the optimum".into()))?
        }
    };
    let to_rows = |m: &DMatrix<f64>, k: usize| (0..k).map(|i| (0..k).map(|j| m[(i, j)]).collect()).collect();

    Ok(FitResult {
        estimates,
        beta_cov: to_rows(&cov, p),
        param_cov: to_rows(&cov, p + 1),
        phi_profile,
        phi_ci_95,
        converged,
        outer_converged,
        outer_iterations,
        monte_carlo_n: config.n_samples(),
        psi0: ref_params,
        acceptance_rates,
        ess: fits[best].ess,
        warnings,
        seed,
        config: *config,
    })
}

fn argmax(fits: &[PhiFit]) -> usize {
    let mut best = 0;
    for (k, f) in fits.iter().enumerate() {
        let v = f.outcome.value;
        if v > fits[best].outcome.value || fits[best].outcome.value.is_nan() && !v.is_nan() {
            best = k;
        }
    }
    best
}

/// 95% interval for φ: where the natural-cubic-spline profile drops by
/// `DEVIANCE_CUTOFF_95` below its maximum knot. Ends that never reach the cutoff are
/// clamped to the grid boundary.
pub fn profile_ci(phis: &[f64], logliks: &[f64], phi_hat: f64) -> Result<(f64, f64)> {
    let spline = NaturalCubicSpline::new(phis, logliks)?;
    let top = logliks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let drop = |t: f64| top - spline.eval(t) - DEVIANCE_CUTOFF_95;
    let lo = crossing(&drop, phi_hat, phis[0], phis);
    let hi = crossing(&drop, phi_hat, phis[phis.len() - 1], phis);
    Ok((lo, hi))
}

fn crossing(g: &dyn Fn(f64) -> f64, from: f64, to: f64, knots: &[f64]) -> f64 {
    if from == to {
        return to;
    }
    // fine scan, resolution tied to the knot spacing
    let spacing = knots.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let steps = (((to - from).abs() / spacing).ceil() as usize * 64).max(64);
    let mut prev = from;
    for s in 1..=steps {
        let t = from + (to - from) * s as f64 / steps as f64;
        if g(t) >= 0.0 {
            let (mut a, mut b) = (prev, t);
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                if g(mid) >= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return 0.5 * (a + b);
        }
        prev = t;
    }
    to
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_of_quadratic_profile_matches_closed_form() {
        // loglik = −(φ − 500)² / 20000 → drop 1.9207 at 500 ± sqrt(20000·1.9207)
        let phis: Vec<f64> = (0..40).map(|i| 100.0 + 25.0 * i as f64).collect();
        let ys: Vec<f64> = phis.iter().map(|p| -(p - 500.0) * (p - 500.0) / 20000.0).collect();
        let (lo, hi) = profile_ci(&phis, &ys, 500.0).unwrap();
        let half = (20000.0 * DEVIANCE_CUTOFF_95).sqrt();
        assert!((lo - (500.0 - half)).abs() < 0.5, "{lo}");
        assert!((hi - (500.0 + half)).abs() < 0.5, "{hi}");
        let s = NaturalCubicSpline::new(&phis, &ys).unwrap();
        for e in [lo, hi] {
            assert!((-s.eval(e) - DEVIANCE_CUTOFF_95).abs() < 1e-3);
        }
    }

    #[test]
    fn flat_profile_clamps_to_grid() {
        let phis = [100.0, 200.0, 300.0, 400.0];
        let ys = [0.0, -0.1, -0.2, -0.1];
        assert_eq!(profile_ci(&phis, &ys, 100.0).unwrap(), (100.0, 400.0));
    }
}
