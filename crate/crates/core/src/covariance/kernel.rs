use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SdaError};

/// Isotropic Matérn correlation with smoothness κ. κ = 0.5 (the default) is
/// the exponential kernel `exp(−u/φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    kappa: f64,
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::exponential()
    }
}

impl Kernel {
    pub const fn exponential() -> Self {
        Kernel { kappa: 0.5 }
    }

    pub fn matern(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(SdaError::Domain(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Kernel { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Correlation at distance `u` for range `phi`; no argument checks.
    #[inline]
    pub fn corr(&self, u: f64, phi: f64) -> f64 {
        matern_unchecked(u / phi, self.kappa)
    }
}

/// Matérn correlation `ρ(u; φ, κ) = (u/φ)^κ K_κ(u/φ) / (2^{κ−1} Γ(κ))`, equal to 1 at `u = 0`.
pub fn matern_corr(u: f64, phi: f64, kappa: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(SdaError::Domain(format!("distance must be non-negative, got {u}")));
    }
    if !(phi > 0.0) {
        return Err(SdaError::Domain(format!("phi must be positive, got {phi}")));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(SdaError::Domain(format!("kappa must be positive, got {kappa}")));
    }
    Ok(matern_unchecked(u / phi, kappa))
}

#[inline]
fn matern_unchecked(x: f64, kappa: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    // closed forms for the half-integer orders
    if kappa == 0.5 {
        (-x).exp()
    } else if kappa == 1.5 {
        (1.0 + x) * (-x).exp()
    } else if kappa == 2.5 {
        (1.0 + x + x * x / 3.0) * (-x).exp()
    } else {
        matern_general(x, kappa)
    }
}

/// General-order Matérn through the scaled Bessel integral.
pub(crate) fn matern_general(x: f64, kappa: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x < 1e-300 {
        return 1.0;
    }
    let log_corr = (1.0 - kappa) * std::f64::consts::LN_2 - ln_gamma(kappa) + kappa * x.ln() - x
        + scaled_bessel_k(kappa, x).ln();
    log_corr.exp().min(1.0)
}

/// `e^x K_ν(x)` from `∫₀^∞ exp(−x (cosh t − 1)) cosh(ν t) dt`.
///
/// The integrand is even and analytic in the strip |Im t| < π/2, so the
/// trapezoid rule converges geometrically. For large x it is close to a
/// Gaussian of width ~1/√x, hence the step shrinks like 0.5/√x.
fn scaled_bessel_k(nu: f64, x: f64) -> f64 {
    let h = 0.05f64.min(0.5 / x.sqrt());
    let nu = nu.abs();
    let f = |t: f64| (-x * (t.cosh() - 1.0) + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
    let mut sum = 0.5 * f(0.0);
    let mut i = 1usize;
    loop {
        let t = i as f64 * h;
        let expo = -x * (t.cosh() - 1.0) + nu * t;
        sum += f(t);
        // past the peak and the remaining tail is negligible
        if expo < -50.0 && x * t.sinh() > nu {
            break;
        }
        i += 1;
        if i > 1_000_000 {
            break;
        }
    }
    sum * h
}

/// Modified Bessel function of the second kind `K_ν(x)` for `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(SdaError::Domain(format!("bessel_k needs x > 0, got {x}")));
    }
    Ok(scaled_bessel_k(nu, x) * (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn matern_examples() {
        assert_eq!(matern_corr(0.0, 3.0, 0.5).unwrap(), 1.0);
        assert_eq!(matern_corr(0.0, 3.0, 1.7).unwrap(), 1.0);
        assert!((matern_corr(2.0, 2.0, 0.5).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((matern_corr(2.0, 2.0, 1.5).unwrap() - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((matern_corr(1.0, 1.0, 0.5).unwrap() - 0.367879441171).abs() < 1e-12);
        assert!((matern_corr(1.0, 1.0, 1.5).unwrap() - 0.735758882343).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(matern_corr(-1.0, 1.0, 0.5), Err(SdaError::Domain(_))));
        assert!(matern_corr(1.0, 0.0, 0.5).is_err());
        assert!(matern_corr(1.0, 1.0, 0.0).is_err());
        assert!(bessel_k(0.5, 0.0).is_err());
    }

    #[test]
    fn bessel_matches_known_values() {
        // K_{1/2}(x) = sqrt(π / 2x) e^{-x}; K_{3/2}(x) = K_{1/2}(x)(1 + 1/x)
        for &x in &[1e-3, 0.1, 0.7, 1.0, 3.0, 10.0, 40.0, 700.0] {
            let k_half = (PI / (2.0 * x)).sqrt() * (-x).exp();
            let k = bessel_k(0.5, x).unwrap();
            assert!((k - k_half).abs() <= 1e-12 * k_half, "x={x}: {k} vs {k_half}");
            let k32 = bessel_k(1.5, x).unwrap();
            assert!((k32 - k_half * (1.0 + 1.0 / x)).abs() <= 1e-12 * k32);
        }
        // tabulated K_0(1), K_1(1)
        assert!((bessel_k(0.0, 1.0).unwrap() - 0.421_024_438_240_708_3).abs() < 1e-14);
        assert!((bessel_k(1.0, 1.0).unwrap() - 0.601_907_230_197_234_6).abs() < 1e-14);
    }

    #[test]
    fn general_path_agrees_with_closed_forms() {
        for &x in &[1e-6, 0.01, 0.5, 1.0, 2.5, 8.0, 30.0] {
            assert!((matern_general(x, 0.5) - (-x).exp()).abs() < 1e-13);
            assert!((matern_general(x, 1.5) - (1.0 + x) * (-x).exp()).abs() < 1e-13);
            let c25 = (1.0 + x + x * x / 3.0) * (-x).exp();
            assert!((matern_general(x, 2.5) - c25).abs() < 1e-13);
        }
    }

    #[test]
    fn exponential_identity_on_dense_grid() {
        let phi = 37.5;
        for i in 0..1000 {
            let u = 10.0 * phi * i as f64 / 999.0;
            let m = matern_corr(u, phi, 0.5).unwrap();
            assert!((m - (-u / phi).exp()).abs() <= 1e-12);
        }
    }

    #[test]
    fn general_order_is_a_decreasing_correlation() {
        let k = Kernel::matern(1.2).unwrap();
        let mut prev = 1.0;
        for i in 1..50 {
            let c = k.corr(i as f64 * 0.2, 1.0);
            assert!(c > 0.0 && c < prev);
            prev = c;
        }
    }
}
