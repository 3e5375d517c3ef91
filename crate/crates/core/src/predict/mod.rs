//! Spatially continuous prediction of S*(x) and exp{S*(x)}, and region-level λᵢ summaries.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::{point_region_corr, CacheEntry, Kernel};
use crate::error::{Result, SdaError};
use crate::geometry::{Partition, Point};
use crate::latent::{DataVector, LatentSample};
use crate::mcml::ModelParams;
use crate::quadrature::QuadratureSet;
use crate::raster::{write_ascii_grid, AsciiGrid, GridSpec};
use crate::stats::DrawSummary;
use crate::{par, seed};

const NODATA: f64 = -9999.0;

/// Per-cell summaries of exp{S*(x)} across draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPrediction {
    pub mean: f64,
    pub sd: f64,
    pub lo95: f64,
    pub hi95: f64,
    /// P(exp{S*(x)} > threshold), when a threshold was requested.
    pub exceedance: Option<f64>,
}

/// Prediction locations on a regular lattice, restricted to the study area.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionGrid {
    lattice: Option<GridSpec>,
    /// Lattice index of each cell (row-major, row 0 at the top).
    cells: Vec<usize>,
    centers: Vec<Point>,
    pub threshold: Option<f64>,
    outputs: Option<Vec<CellPrediction>>,
}

impl PredictionGrid {
    /// Lattice cells of side `spacing` over the partition's bounding box whose
    /// centers lie inside some region.
    pub fn over_partition(partition: &Partition, spacing: f64) -> Result<Self> {
        let lattice = GridSpec::covering(partition.study_area_bbox(), spacing)?;
        let (cells, centers): (Vec<usize>, Vec<Point>) = (0..lattice.len())
            .map(|i| (i, lattice.center_of(i)))
            .filter(|&(_, c)| partition.locate(c).is_some())
            .unzip();
        if cells.is_empty() {
            return Err(SdaError::Config(format!("no {spacing} m prediction cell falls inside the study area")));
        }
        Ok(PredictionGrid {
            lattice: Some(lattice),
            cells,
            centers,
            threshold: None,
            outputs: None,
        })
    }

    /// Arbitrary prediction points; these cannot be written as ASCII grids.
    pub fn from_points(points: Vec<Point>) -> Self {
        PredictionGrid {
            lattice: None,
            cells: (0..points.len()).collect(),
            centers: points,
            threshold: None,
            outputs: None,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn lattice(&self) -> Option<&GridSpec> {
        self.lattice.as_ref()
    }

    pub fn outputs(&self) -> Option<&[CellPrediction]> {
        self.outputs.as_deref()
    }

    fn raster_of(&self, f: impl Fn(&CellPrediction) -> f64) -> Result<AsciiGrid> {
        let lattice = self
            .lattice
            .ok_or_else(|| SdaError::Config("prediction points are not on a lattice".into()))?;
        let out = self
            .outputs
            .as_ref()
            .ok_or_else(|| SdaError::Config("surface has not been predicted".into()))?;
        let mut values = vec![NODATA; lattice.len()];
        for (&idx, o) in self.cells.iter().zip(out) {
            values[idx] = f(o);
        }
        Ok(AsciiGrid {
            grid: lattice,
            values,
            nodata: Some(NODATA),
        })
    }

    /// Writes the mean, sd and (if a threshold is set) exceedance surfaces as ESRI ASCII grids.
    pub fn write_ascii<W: Write>(&self, mean: W, sd: W, exceedance: Option<W>) -> Result<()> {
        let io = |e: std::io::Error| SdaError::Config(format!("writing surface: {e}"));
        write_ascii_grid(mean, &self.raster_of(|o| o.mean)?).map_err(io)?;
        write_ascii_grid(sd, &self.raster_of(|o| o.sd)?).map_err(io)?;
        if let (Some(w), Some(_)) = (exceedance, self.threshold) {
            write_ascii_grid(w, &self.raster_of(|o| o.exceedance.unwrap_or(NODATA))?).map_err(io)?;
        }
        Ok(())
    }

    /// `x,y,mean,sd,lo95,hi95[,exceedance]`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let Some(out) = &self.outputs else {
            return Err(std::io::Error::other("surface has not been predicted"));
        };
        write!(w, "x,y,mean,sd,lo95,hi95")?;
        if self.threshold.is_some() {
            write!(w, ",exceedance")?;
        }
        writeln!(w)?;
        for (c, o) in self.centers.iter().zip(out) {
            write!(w, "{},{},{},{},{},{}", c.x, c.y, o.mean, o.sd, o.lo95, o.hi95)?;
            if let Some(e) = o.exceedance {
                write!(w, ",{e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// `c(x)`: σ² times the weighted point-to-region correlation for each region.
pub fn cross_cov_vector(x: Point, quads: &[QuadratureSet], params: &ModelParams, kernel: Kernel) -> Result<DVector<f64>> {
    let mut c = DVector::zeros(quads.len());
    for (i, q) in quads.iter().enumerate() {
        c[i] = params.sigma2 * point_region_corr(x, q, params.phi, kernel)?;
    }
    Ok(c)
}

/// Shared state for conditional simulation of S*(x) given the latent draws.
pub struct SurfacePredictor<'a> {
    quads: &'a [QuadratureSet],
    kernel: Kernel,
    params: ModelParams,
    r_inv: &'a DMatrix<f64>,
    /// R⁻¹(η_j − Dβ), one column per draw.
    weights: DMatrix<f64>,
}

impl<'a> SurfacePredictor<'a> {
    pub fn new(
        draws: &LatentSample,
        params: &ModelParams,
        data: &DataVector,
        entry: &'a CacheEntry,
        quads: &'a [QuadratureSet],
        kernel: Kernel,
    ) -> Result<Self> {
        let n = data.n();
        if draws.n() != n || entry.n() != n || quads.len() != n {
            return Err(SdaError::Shape(format!(
                "draws {} rows, cache {n}x{n}, {} quadrature sets, {n} regions",
                draws.n(),
                quads.len()
            )));
        }
        if (entry.phi - params.phi).abs() > 1e-9 * params.phi {
            return Err(SdaError::Config(format!(
                "cache entry phi={} does not match params phi={}",
                entry.phi, params.phi
            )));
        }
        let mean = &data.design * DVector::from_column_slice(&params.beta);
        let mut centred = draws.draws.clone();
        for mut col in centred.column_iter_mut() {
            col -= &mean;
        }
        Ok(SurfacePredictor {
            quads,
            kernel,
            params: params.clone(),
            r_inv: &entry.inverse,
            weights: &entry.inverse * centred,
        })
    }

    /// Conditional means of S*(x) for every draw and the common conditional variance.
    pub fn conditional(&self, x: Point) -> Result<(Vec<f64>, f64)> {
        let s2 = self.params.sigma2;
        let r = cross_cov_vector(x, self.quads, &self.params, self.kernel)? / s2;
        let means: Vec<f64> = self.weights.tr_mul(&r).iter().copied().collect();
        let var = s2 * (1.0 - r.dot(&(self.r_inv * &r)));
        if var < -1e-8 * s2 {
            return Err(SdaError::NumericalConsistency(format!(
                "predictive variance {var:e} at ({}, {}) is negative; cache and quadrature disagree",
                x.x, x.y
            )));
        }
        Ok((means, var.clamp(0.0, s2)))
    }

    /// One draw of S*(x) per latent draw.
    pub fn sample(&self, x: Point, seed: u64) -> Result<Vec<f64>> {
        let (means, var) = self.conditional(x)?;
        let sd = var.sqrt();
        let mut rng = seed::rng(seed);
        Ok(means
            .into_iter()
            .map(|m| m + sd * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }
}

/// Fills `grid` with summaries of exp{S*(x)}; every cell has its own derived seed.
pub fn predict_surface(predictor: &SurfacePredictor<'_>, grid: &mut PredictionGrid, seed: u64) -> Result<()> {
    let threshold = grid.threshold;
    let centers = &grid.centers;
    let cells = &grid.cells;
    let out = par::try_map_range(centers.len(), |k| -> Result<CellPrediction> {
        let s = predictor.sample(centers[k], seed::derive_index(seed, "predict-cell", cells[k]))?;
        let mut risk: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        let exceedance = threshold.map(|c| risk.iter().filter(|&&v| v > c).count() as f64 / risk.len() as f64);
        let d = DrawSummary::from_draws(&mut risk);
        Ok(CellPrediction {
            mean: d.mean,
            sd: d.sd,
            lo95: d.lo95,
            hi95: d.hi95,
            exceedance,
        })
    })?;
    grid.outputs = Some(out);
    Ok(())
}

/// Per-region summaries of λᵢ = mᵢ exp{ηᵢ}.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPrediction {
    pub regions: Vec<DrawSummary>,
}

impl RegionPrediction {
    /// `region_id,mean,sd,lo95,hi95`
    pub fn write_csv<W: Write>(&self, mut w: W, ids: &[&str]) -> std::io::Result<()> {
        if ids.len() != self.regions.len() {
            return Err(std::io::Error::other("region id count does not match predictions"));
        }
        writeln!(w, "region_id,mean,sd,lo95,hi95")?;
        for (id, r) in ids.iter().zip(&self.regions) {
            writeln!(w, "{id},{},{},{},{}", r.mean, r.sd, r.lo95, r.hi95)?;
        }
        Ok(())
    }
}

pub fn predict_regions(draws: &LatentSample, data: &DataVector) -> Result<RegionPrediction> {
    if draws.n() != data.n() {
        return Err(SdaError::Shape(format!("draws have {} rows, data {} regions", draws.n(), data.n())));
    }
    let regions = (0..data.n())
        .map(|i| {
            let m = data.offsets[i];
            let mut lam: Vec<f64> = draws.draws.row(i).iter().map(|e| m * e.exp()).collect();
            DrawSummary::from_draws(&mut lam)
        })
        .collect();
    Ok(RegionPrediction { regions })
}

#[cfg(test)]
mod tests;
