use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Open01, StandardNormal};

use super::{conditional_mode, DataVector, LatentChainConfig, LatentSample, LatentTarget};
use crate::covariance::CacheEntry;
use crate::error::Result;
use crate::mcml::ModelParams;
use crate::seed;

/// Standardized-scale target: η = η̂ + L x with L the lower Cholesky factor of Σ̂.
struct Standardized<'a> {
    target: LatentTarget<'a>,
    eta_hat: DVector<f64>,
    l: DMatrix<f64>,
}

struct State {
    x: DVector<f64>,
    eta: DVector<f64>,
    lp: f64,
    grad: DVector<f64>,
}

impl Standardized<'_> {
    fn state(&self, x: DVector<f64>) -> State {
        let eta = &self.eta_hat + &self.l * &x;
        let (lp, g_eta) = self.target.eval(&eta);
        let grad = self.l.tr_mul(&g_eta);
        State { x, eta, lp, grad }
    }
}

/// log q(to | from) up to a constant shared by both directions.
fn log_proposal(to: &DVector<f64>, from: &State, h: f64) -> f64 {
    let h2 = h * h;
    let mut s = 0.0;
    for i in 0..to.len() {
        let d = to[i] - from.x[i] - 0.5 * h2 * from.grad[i];
        s += d * d;
    }
    -s / (2.0 * h2)
}

/// Runs MALA on the standardized effects, starting at the Laplace mode.
///
/// With `config.adapt` the log step size follows a Robbins–Monro recursion toward
/// the target acceptance during burn-in and is then frozen.
pub fn run_mala(
    data: &DataVector,
    params: &ModelParams,
    entry: &CacheEntry,
    config: &LatentChainConfig,
    seed: u64,
) -> Result<LatentSample> {
    config.validate()?;
    let mode = conditional_mode(data, params, entry)?;
    let n = data.n();
    let st = Standardized {
        target: LatentTarget::new(data, params, entry)?,
        eta_hat: mode.eta_hat.clone(),
        l: mode.sigma_hat_chol.clone(),
    };
    let mut rng = seed::rng(seed);

    let mut log_h = config.step_size.unwrap_or(1.65 / (n as f64).powf(1.0 / 6.0)).ln();
    let mut cur = st.state(DVector::zeros(n));
    let n_keep = config.retained();
    let mut draws = DMatrix::zeros(n, n_keep);
    let mut retained = Vec::with_capacity(n_keep);
    let mut accepted_after = 0usize;

    for iter in 1..=config.n_iter {
        let h = log_h.exp();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let prop_x = &cur.x + &cur.grad * (0.5 * h * h) + z * h;
        let prop = st.state(prop_x);
        let log_alpha = if prop.lp.is_finite() {
            prop.lp - cur.lp + log_proposal(&cur.x, &prop, h) - log_proposal(&prop.x, &cur, h)
        } else {
            f64::NEG_INFINITY
        };
        let u: f64 = rng.sample(Open01);
        let accept = u.ln() < log_alpha;
        if accept {
            cur = prop;
        }

        if iter <= config.burn_in {
            if config.adapt {
                let alpha = log_alpha.min(0.0).exp();
                let gain = (iter as f64).powf(-0.6);
                log_h += gain * (alpha - config.target_acceptance);
                log_h = log_h.clamp(-20.0, 5.0);
            }
        } else {
            accepted_after += usize::from(accept);
            let k = iter - config.burn_in;
            if k.is_multiple_of(config.thin) {
                let j = k / config.thin - 1;
                if j < n_keep {
                    draws.set_column(j, &cur.eta);
                    retained.push((iter, accept));
                }
            }
        }
    }

    let acceptance_rate = accepted_after as f64 / (config.n_iter - config.burn_in) as f64;
    let warning = if !(0.1..=0.9).contains(&acceptance_rate) {
        log::warn!("MALA acceptance rate {acceptance_rate:.3} outside [0.1, 0.9]");
        Some(format!("acceptance rate {acceptance_rate:.3} outside [0.1, 0.9]"))
    } else {
        None
    };
    Ok(LatentSample {
        draws,
        acceptance_rate,
        eta_hat: mode.eta_hat,
        sigma_hat: mode.sigma_hat,
        step_size: log_h.exp(),
        retained,
        warning,
    })
}
