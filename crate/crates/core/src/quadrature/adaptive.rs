//! Adaptive refinement of a region-pair integral: grow both point sets in
//! batches of k with shrinking packing density until the integral settles.

use super::{InhibitionSampler, QuadratureConfig, QuadratureSet, WeightSurface};
use crate::covariance::{region_pair_corr, Kernel};
use crate::error::{Result, SdaError};
use crate::geometry::Region;

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub first: QuadratureSet,
    pub second: QuadratureSet,
    pub value: f64,
    /// Refinement rounds evaluated (the initial evaluation is round 1).
    pub rounds: usize,
    pub converged: bool,
    /// Points per set after each round; never decreases.
    pub points_per_round: Vec<(usize, usize)>,
}

/// Inhibition distance at which `k` points reach packing density γ.
pub(crate) fn first_round_delta(config: &QuadratureConfig, area: f64) -> f64 {
    (4.0 * config.gamma * area / (std::f64::consts::PI * config.batch_size_k as f64)).sqrt()
}

/// Adaptive evaluation of the scaled region-pair integral for one φ.
///
/// Round 1 places `k` points per region at packing density γ; round `r`
/// adds `k` more at density `γ / r` (inhibition distance `δ₁ / √r`), then
/// re-evaluates. The loop stops as soon as two successive values agree
/// (`|I_old − I_new| < ε |I_new|`, or exactly equal). After `max_rounds`
/// without agreement the last value is returned with `converged = false`.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_quadrature(
    regions: (&Region, &Region),
    weights: (&dyn WeightSurface, &dyn WeightSurface),
    phi: f64,
    kernel: Kernel,
    config: &QuadratureConfig,
    seeds: (u64, u64),
) -> Result<AdaptiveOutcome> {
    config.validate()?;
    if !(phi > 0.0) {
        return Err(SdaError::Domain(format!("phi must be positive, got {phi}")));
    }
    let k = config.batch_size_k;
    let mut a = InhibitionSampler::new(regions.0, weights.0, config, seeds.0)?;
    let mut b = InhibitionSampler::new(regions.1, weights.1, config, seeds.1)?;
    let delta_a = first_round_delta(config, regions.0.area());
    let delta_b = first_round_delta(config, regions.1.area());

    a.extend(k, delta_a)?;
    b.extend(k, delta_b)?;
    let mut points_per_round = vec![(a.len(), b.len())];
    let mut old = region_pair_corr(&a.snapshot(), &b.snapshot(), phi, kernel)?;

    for round in 2..=config.max_rounds {
        a.extend(k, delta_a / (round as f64).sqrt())?;
        b.extend(k, delta_b / (round as f64).sqrt())?;
        points_per_round.push((a.len(), b.len()));
        let new = region_pair_corr(&a.snapshot(), &b.snapshot(), phi, kernel)?;
        if new == old || (old - new).abs() < config.rel_tol_eps * new.abs() {
            return Ok(AdaptiveOutcome {
                first: a.into_set(),
                second: b.into_set(),
                value: new,
                rounds: round,
                converged: true,
                points_per_round,
            });
        }
        old = new;
    }
    log::warn!(
        "adaptive quadrature for ({}, {}) at phi={phi} did not converge in {} rounds",
        regions.0.id(),
        regions.1.id(),
        config.max_rounds
    );
    Ok(AdaptiveOutcome {
        first: a.into_set(),
        second: b.into_set(),
        value: old,
        rounds: config.max_rounds,
        converged: false,
        points_per_round,
    })
}
