//! Per-region quadrature point sets.
//!
//! Points come from simple sequential inhibition combined with rejection
//! sampling against the region's weight surface, so they spread evenly over
//! the region while concentrating where the weight (population) is high.

mod adaptive;
mod sampler;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdaError};
use crate::geometry::{BBox, Partition, Point, Region};
use crate::raster::PopulationRaster;
use crate::{par, seed};

pub use adaptive::{adaptive_quadrature, AdaptiveOutcome};
pub use sampler::{sample_inhibition, InhibitionSampler};

/// Largest packing density attainable by non-overlapping discs.
pub const MAX_PACKING: f64 = std::f64::consts::PI / 3.464_101_615_137_754_5; // π/√12

/// Averaging weights: population-weighted (`w = m(x)/m_i`) or uniform (`w = 1/|R_i|`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Population,
    Uniform,
}

impl std::str::FromStr for Weighting {
    type Err = SdaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "population" => Ok(Weighting::Population),
            "uniform" => Ok(Weighting::Uniform),
            other => Err(SdaError::Config(format!(
                "unknown weighting `{other}` (expected population|uniform)"
            ))),
        }
    }
}

/// A non-negative weight surface over the study area.
pub trait WeightSurface: Sync {
    fn weight(&self, p: Point) -> f64;
    /// An upper bound of the weight over `bbox`.
    fn max_in(&self, bbox: &BBox) -> f64;
    fn weighting(&self) -> Weighting;
}

/// Constant weight.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformWeight;

impl WeightSurface for UniformWeight {
    fn weight(&self, _p: Point) -> f64 {
        1.0
    }
    fn max_in(&self, _bbox: &BBox) -> f64 {
        1.0
    }
    fn weighting(&self) -> Weighting {
        Weighting::Uniform
    }
}

impl WeightSurface for PopulationRaster {
    fn weight(&self, p: Point) -> f64 {
        self.sample(p).unwrap_or(0.0)
    }
    fn max_in(&self, bbox: &BBox) -> f64 {
        PopulationRaster::max_in(self, bbox)
    }
    fn weighting(&self) -> Weighting {
        Weighting::Population
    }
}

/// Weight surface from a closure and a known upper bound; treated as population weighting.
pub struct FnWeight<F> {
    f: F,
    max: f64,
}

impl<F: Fn(Point) -> f64 + Sync> FnWeight<F> {
    pub fn new(f: F, max: f64) -> Self {
        FnWeight { f, max }
    }
}

impl<F: Fn(Point) -> f64 + Sync> WeightSurface for FnWeight<F> {
    fn weight(&self, p: Point) -> f64 {
        (self.f)(p)
    }
    fn max_in(&self, _bbox: &BBox) -> f64 {
        self.max
    }
    fn weighting(&self) -> Weighting {
        Weighting::Population
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureMode {
    NonAdaptive,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Minimum inhibition distance δ in metres.
    pub delta: f64,
    /// Packing density γ.
    pub gamma: f64,
    pub mode: QuadratureMode,
    /// Points added per adaptive round.
    pub batch_size_k: usize,
    /// Relative tolerance ε of the adaptive loop.
    pub rel_tol_eps: f64,
    pub max_attempts_per_point: usize,
    /// Cap on adaptive rounds; hitting it sets the non-convergence flag.
    pub max_rounds: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            delta: 1.0,
            gamma: 0.55,
            mode: QuadratureMode::NonAdaptive,
            batch_size_k: 10,
            rel_tol_eps: 1e-3,
            max_attempts_per_point: 2000,
            max_rounds: 12,
        }
    }
}

impl QuadratureConfig {
    /// Default config with δ set to a quarter of the square root of the median region area.
    pub fn for_partition(partition: &Partition) -> Self {
        QuadratureConfig {
            delta: default_delta(partition),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(SdaError::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.gamma > 0.0 && self.gamma <= MAX_PACKING) {
            return Err(SdaError::Config(format!(
                "gamma must lie in (0, {MAX_PACKING:.4}], got {}",
                self.gamma
            )));
        }
        if !(self.rel_tol_eps > 0.0) {
            return Err(SdaError::Config("rel_tol_eps must be positive".into()));
        }
        if self.batch_size_k == 0 || self.max_attempts_per_point == 0 || self.max_rounds < 2 {
            return Err(SdaError::Config(
                "batch_size_k and max_attempts_per_point must be >= 1, max_rounds >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// δ default: `sqrt(median area) / 4`.
pub fn default_delta(partition: &Partition) -> f64 {
    let mut areas: Vec<f64> = partition.regions().iter().map(Region::area).collect();
    areas.sort_by(f64::total_cmp);
    let n = areas.len();
    let median = if n % 2 == 1 {
        areas[n / 2]
    } else {
        0.5 * (areas[n / 2 - 1] + areas[n / 2])
    };
    median.sqrt() / 4.0
}

/// Number of points for a region: `ceil(4 γ |R| / (π δ²))`, at least 1.
pub fn point_budget(config: &QuadratureConfig, region_area: f64) -> usize {
    let raw = 4.0 * config.gamma * region_area / (std::f64::consts::PI * config.delta * config.delta);
    (raw.ceil() as usize).max(1)
}

/// Points and weights representing one region in every region integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSet {
    pub region_id: String,
    pub points: Vec<Point>,
    /// Proportional to `w_i(x_k)`; only ratios matter.
    pub weights: Vec<f64>,
    pub weighting: Weighting,
    /// Points per refinement level when the set is nested (adaptive mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
}

impl QuadratureSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of complete refinement levels held (1 for non-nested sets).
    pub fn levels(&self) -> usize {
        match self.batch {
            Some(k) => self.points.len() / k,
            None => 1,
        }
    }

    /// Points in use at refinement level `level` (1-based).
    pub fn level_len(&self, level: usize) -> usize {
        match self.batch {
            Some(k) => (level * k).min(self.points.len()),
            None => self.points.len(),
        }
    }

    /// Single-point set; handy for tests and degenerate regions.
    pub fn single(region_id: impl Into<String>, p: Point) -> Self {
        QuadratureSet {
            region_id: region_id.into(),
            points: vec![p],
            weights: vec![1.0],
            weighting: Weighting::Uniform,
            batch: None,
        }
    }
}

/// Builds one quadrature set per region. Each region samples from its own
/// stream derived from `(master_seed, region id)`.
///
/// In adaptive mode each set is nested: `max_rounds` levels of
/// `batch_size_k` points, level `r` inhibited at `δ₁ / √r` where `δ₁` gives
/// the first batch packing density γ.
pub fn build_quadrature(
    partition: &Partition,
    weights: &dyn WeightSurface,
    config: &QuadratureConfig,
    master_seed: u64,
) -> Result<Vec<QuadratureSet>> {
    config.validate()?;
    let regions = partition.regions();
    par::try_map_range(regions.len(), |i| {
        let region = &regions[i];
        let seed = seed::derive(master_seed, "quadrature", region.id());
        match config.mode {
            QuadratureMode::NonAdaptive => {
                let budget = point_budget(config, region.area());
                sample_inhibition(region, weights, config, budget, seed)
            }
            QuadratureMode::Adaptive => {
                let mut sampler = InhibitionSampler::new(region, weights, config, seed)?;
                let k = config.batch_size_k;
                let first = adaptive::first_round_delta(config, region.area());
                for round in 1..=config.max_rounds {
                    sampler.extend(k, first / (round as f64).sqrt())?;
                }
                let mut set = sampler.into_set();
                set.batch = Some(k);
                Ok(set)
            }
        }
    })
}

/// Writes `region_id,x,y,weight` rows.
pub fn write_quadrature_csv<W: Write>(mut w: W, sets: &[QuadratureSet]) -> std::io::Result<()> {
    writeln!(w, "region_id,x,y,weight")?;
    for set in sets {
        for (p, wt) in set.points.iter().zip(&set.weights) {
            writeln!(w, "{},{},{},{}", set.region_id, p.x, p.y, wt)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_examples() {
        let cfg = QuadratureConfig {
            gamma: 0.55,
            delta: 10.0,
            ..Default::default()
        };
        // 4 * 0.55 * 1e4 / (100 π) = 70.03
        assert_eq!(point_budget(&cfg, 10_000.0), 71);
        let huge = QuadratureConfig {
            delta: 1e6,
            ..cfg
        };
        assert_eq!(point_budget(&huge, 10_000.0), 1);
    }

    #[test]
    fn budget_linear_in_area() {
        let cfg = QuadratureConfig {
            gamma: 0.55,
            delta: 7.0,
            ..Default::default()
        };
        let pre = |a: f64| 4.0 * cfg.gamma * a / (std::f64::consts::PI * cfg.delta * cfg.delta);
        assert_eq!(pre(2.0 * 1234.5), 2.0 * pre(1234.5));
    }

    #[test]
    fn default_delta_gives_about_eleven_points() {
        let p = Partition::grid(Point::new(0.0, 0.0), 500.0, 3, 3).unwrap();
        let cfg = QuadratureConfig::for_partition(&p);
        assert!((cfg.delta - 125.0).abs() < 1e-12);
        // 4 γ A / (π A / 16) = 64 γ / π ≈ 11.2
        assert_eq!(point_budget(&cfg, 250_000.0), 12);
    }

    #[test]
    fn config_validation() {
        let ok = QuadratureConfig::default();
        assert!(ok.validate().is_ok());
        assert!(QuadratureConfig { gamma: 0.95, ..ok }.validate().is_err());
        assert!(QuadratureConfig { gamma: MAX_PACKING, ..ok }.validate().is_ok());
        assert!(QuadratureConfig { delta: 0.0, ..ok }.validate().is_err());
        assert!(QuadratureConfig { rel_tol_eps: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn build_is_reproducible_and_inside() {
        let p = Partition::grid(Point::new(0.0, 0.0), 100.0, 3, 2).unwrap();
        let cfg = QuadratureConfig::for_partition(&p);
        let a = build_quadrature(&p, &UniformWeight, &cfg, 11).unwrap();
        let b = build_quadrature(&p, &UniformWeight, &cfg, 11).unwrap();
        assert_eq!(a, b);
        for (set, region) in a.iter().zip(p.regions()) {
            assert_eq!(set.region_id, region.id());
            assert!(set.points.iter().all(|&q| region.contains(q)));
        }
        let c = build_quadrature(&p, &UniformWeight, &cfg, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn adaptive_build_is_nested() {
        let p = Partition::grid(Point::new(0.0, 0.0), 100.0, 2, 1).unwrap();
        let cfg = QuadratureConfig {
            mode: QuadratureMode::Adaptive,
            batch_size_k: 5,
            max_rounds: 4,
            ..QuadratureConfig::for_partition(&p)
        };
        let sets = build_quadrature(&p, &UniformWeight, &cfg, 3).unwrap();
        for s in &sets {
            assert_eq!(s.len(), 20);
            assert_eq!(s.levels(), 4);
            assert_eq!(s.level_len(2), 10);
        }
    }

    #[test]
    fn csv_dump_layout() {
        let set = QuadratureSet::single("A", Point::new(1.5, 2.0));
        let mut buf = Vec::new();
        write_quadrature_csv(&mut buf, &[set]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "region_id,x,y,weight\nA,1.5,2,1\n");
    }
}
