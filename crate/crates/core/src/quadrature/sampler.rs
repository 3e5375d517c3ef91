use rand::Rng;
use rand_distr::Open01;

use super::{QuadratureConfig, QuadratureSet, WeightSurface, Weighting};
use crate::error::{Result, SdaError};
use crate::geometry::{Point, Region};
use crate::seed::{self, SdaRng};

/// Floor of the weight-driven inhibition distance, as a fraction of δ.
const MIN_DELTA_FRACTION: f64 = 0.1;
/// Relaxation factor applied to δ when a point cannot be placed.
const RELAX: f64 = 0.9;
const MAX_RELAXATIONS: usize = 300;

/// Stateful weighted sequential-inhibition sampler for one region.
///
/// Proposals are uniform over the region (bbox draws rejected into the
/// region), accepted with probability `w(x)/w_max`, and kept only if they
/// clear the inhibition distance of every previously accepted point. The
/// inhibition distance around an accepted point `x_j` is
/// `max(0.1 δ, δ (1 − w(x_j)/w_max))` under population weighting and `δ`
/// under uniform weighting.
pub struct InhibitionSampler<'a> {
    region: &'a Region,
    weights: &'a dyn WeightSurface,
    w_max: f64,
    max_attempts: usize,
    rng: SdaRng,
    points: Vec<Point>,
    point_weights: Vec<f64>,
    relaxations: usize,
}

impl<'a> InhibitionSampler<'a> {
    pub fn new(
        region: &'a Region,
        weights: &'a dyn WeightSurface,
        config: &QuadratureConfig,
        rng_seed: u64,
    ) -> Result<Self> {
        let w_max = weights.max_in(&region.bbox());
        if !(w_max > 0.0) || !w_max.is_finite() {
            return Err(SdaError::DegenerateWeight(format!(
                "weight surface is zero over region `{}`",
                region.id()
            )));
        }
        Ok(InhibitionSampler {
            region,
            weights,
            w_max,
            max_attempts: config.max_attempts_per_point,
            rng: seed::rng(rng_seed),
            points: Vec::new(),
            point_weights: Vec::new(),
            relaxations: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of δ relaxations performed so far.
    pub fn relaxations(&self) -> usize {
        self.relaxations
    }

    fn radius(&self, weight: f64, delta: f64) -> f64 {
        match self.weights.weighting() {
            Weighting::Uniform => delta,
            Weighting::Population => {
                (delta * (1.0 - weight / self.w_max)).max(MIN_DELTA_FRACTION * delta)
            }
        }
    }

    fn propose(&mut self) -> Option<(Point, f64)> {
        let b = self.region.bbox();
        let p = Point::new(
            b.min_x + self.rng.random::<f64>() * b.width(),
            b.min_y + self.rng.random::<f64>() * b.height(),
        );
        if !self.region.contains(p) {
            return None;
        }
        let w = self.weights.weight(p);
        let u: f64 = self.rng.sample(Open01);
        (u <= w / self.w_max).then_some((p, w))
    }

    fn inhibited(&self, p: Point, delta: f64) -> bool {
        self.points
            .iter()
            .zip(&self.point_weights)
            .any(|(&q, &wq)| p.dist(q) <= self.radius(wq, delta))
    }

    /// Adds `count` points with inhibition distance `delta`. When a point
    /// cannot be placed within the attempt budget, δ shrinks by 10% and the
    /// search continues.
    pub fn extend(&mut self, count: usize, delta: f64) -> Result<()> {
        let mut delta = delta;
        let target = self.points.len() + count;
        while self.points.len() < target {
            let mut placed = false;
            for _ in 0..self.max_attempts {
                let Some((p, w)) = self.propose() else { continue };
                if self.points.is_empty() || !self.inhibited(p, delta) {
                    self.points.push(p);
                    self.point_weights.push(w);
                    placed = true;
                    break;
                }
            }
            if !placed {
                self.relaxations += 1;
                if self.relaxations > MAX_RELAXATIONS {
                    return Err(SdaError::DegenerateWeight(format!(
                        "could not place point {} in region `{}` (no positive weight reachable)",
                        self.points.len() + 1,
                        self.region.id()
                    )));
                }
                let relaxed = delta * RELAX;
                log::warn!(
                    "region `{}`: relaxing inhibition distance {delta:.4} -> {relaxed:.4} after {} attempts",
                    self.region.id(),
                    self.max_attempts
                );
                delta = relaxed;
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> QuadratureSet {
        self.build_set(self.points.clone(), self.point_weights.clone())
    }

    pub fn into_set(self) -> QuadratureSet {
        let (points, weights) = (self.points.clone(), self.point_weights.clone());
        self.build_set(points, weights)
    }

    fn build_set(&self, points: Vec<Point>, raw: Vec<f64>) -> QuadratureSet {
        let weighting = self.weights.weighting();
        let weights = match weighting {
            Weighting::Uniform => vec![1.0 / self.region.area(); points.len()],
            Weighting::Population => raw,
        };
        QuadratureSet {
            region_id: self.region.id().to_string(),
            points,
            weights,
            weighting,
            batch: None,
        }
    }
}

/// Draws exactly `count` points in `region` by weighted sequential inhibition at distance `config.delta`.
pub fn sample_inhibition(
    region: &Region,
    weights: &dyn WeightSurface,
    config: &QuadratureConfig,
    count: usize,
    rng_seed: u64,
) -> Result<QuadratureSet> {
    if count == 0 {
        return Err(SdaError::Config("quadrature point count must be >= 1".into()));
    }
    let mut sampler = InhibitionSampler::new(region, weights, config, rng_seed)?;
    sampler.extend(count, config.delta)?;
    Ok(sampler.into_set())
}
