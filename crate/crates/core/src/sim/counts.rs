use rand::Rng;
use rand_distr::Poisson;

use crate::error::{Result, SdaError};
use crate::geometry::Partition;
use crate::raster::{GridSpec, PopulationRaster};
use crate::seed;

/// Region index of each raster cell, by cell center (first listed region wins).
#[derive(Debug, Clone, PartialEq)]
pub struct CellMap {
    grid: GridSpec,
    region_of: Vec<Option<usize>>,
    n_regions: usize,
}

impl CellMap {
    pub fn new(grid: GridSpec, partition: &Partition) -> Self {
        let region_of = (0..grid.len()).map(|i| partition.locate(grid.center_of(i))).collect();
        CellMap {
            grid,
            region_of,
            n_regions: partition.len(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn region_of(&self, cell: usize) -> Option<usize> {
        self.region_of[cell]
    }

    pub fn n_regions(&self) -> usize {
        self.n_regions
    }

    fn check(&self, field: &[f64], raster: &PopulationRaster) -> Result<()> {
        if field.len() != self.grid.len() || raster.grid() != &self.grid {
            return Err(SdaError::Shape("field, raster and cell map must share one grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedCounts {
    pub counts: Vec<u64>,
    /// Events in cells outside every region.
    pub dropped: u64,
}

impl SimulatedCounts {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.dropped
    }
}

/// Poisson counts per cell with mean m(cell)·exp{S(cell)}, aggregated to regions.
pub fn simulate_counts(field: &[f64], raster: &PopulationRaster, map: &CellMap, seed: u64) -> Result<SimulatedCounts> {
    map.check(field, raster)?;
    let mut rng = seed::rng(seed);
    let mut counts = vec![0u64; map.n_regions];
    let mut dropped = 0u64;
    for (cell, s) in field.iter().enumerate() {
        let mean = raster.cell_mass(cell) * s.exp();
        if !(mean > 0.0) {
            continue;
        }
        let k = rng.sample(Poisson::new(mean).map_err(|e| SdaError::Domain(format!("cell {cell}: {e}")))?) as u64;
        match map.region_of[cell] {
            Some(r) => counts[r] += k,
            None => dropped += k,
        }
    }
    if dropped > 0 {
        log::info!("{dropped} simulated events fell outside every region and were dropped");
    }
    Ok(SimulatedCounts { counts, dropped })
}

/// True expected counts λᵢ = Σ_cells∈Rᵢ m(cell)·exp{S(cell)}.
pub fn region_truths(field: &[f64], raster: &PopulationRaster, map: &CellMap) -> Result<Vec<f64>> {
    map.check(field, raster)?;
    let mut truth = vec![0.0; map.n_regions];
    for (cell, s) in field.iter().enumerate() {
        if let Some(r) = map.region_of[cell] {
            truth[r] += raster.cell_mass(cell) * s.exp();
        }
    }
    Ok(truth)
}
