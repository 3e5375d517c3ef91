use super::Kernel;
use crate::error::{Result, SdaError};
use crate::geometry::Point;
use crate::quadrature::QuadratureSet;

/// Weighted double-sum approximation of the scaled region-pair integral
/// `∫∫ w_i(x) w_j(x') ρ(‖x − x'‖; φ) dx dx'`, normalized by the weight sums.
pub fn region_pair_corr(qi: &QuadratureSet, qj: &QuadratureSet, phi: f64, kernel: Kernel) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, &wp) in qi.points.iter().zip(&qi.weights) {
        for (q, &wq) in qj.points.iter().zip(&qj.weights) {
            let w = wp * wq;
            num += w * kernel.corr(p.dist(*q), phi);
            den += w;
        }
    }
    if !(den > 0.0) {
        return Err(SdaError::DegenerateWeight(format!(
            "weight products for ({}, {}) sum to zero",
            qi.region_id, qj.region_id
        )));
    }
    Ok(num / den)
}

/// Weighted single sum `Σ_k w(x_k) ρ(‖x − x_k‖; φ) / Σ_k w(x_k)`.
pub fn point_region_corr(x: Point, q: &QuadratureSet, phi: f64, kernel: Kernel) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, &w) in q.points.iter().zip(&q.weights) {
        num += w * kernel.corr(x.dist(*p), phi);
        den += w;
    }
    if !(den > 0.0) {
        return Err(SdaError::DegenerateWeight(format!(
            "weights of region `{}` sum to zero",
            q.region_id
        )));
    }
    Ok(num / den)
}
