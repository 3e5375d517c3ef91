//! Simulation harness: Gaussian random fields on a raster, Poisson counts
//! aggregated to regions, and the bias/RMSE/WPI/CP metric suite.

mod counts;
mod grf;
mod metrics;
mod study;

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covariance::PhiGrid;
use crate::error::{Result, SdaError};
use crate::quadrature::{QuadratureMode, Weighting};

pub use counts::{region_truths, simulate_counts, CellMap, SimulatedCounts};
pub use grf::{simulate_grf, GrfSimulator, MAX_GRF_CELLS};
pub use metrics::{metrics, write_metrics_csv, MetricReport, MetricTarget};
pub use study::{synthetic_population, ReplicateOutcome, ReplicateSummary, Study, StudyReport};

/// A simulation study on a synthetic square partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    /// Field standard deviation σ.
    pub sigma: f64,
    /// Field scale φ in metres.
    pub phi: f64,
    /// Spacing of the continuous prediction lattice.
    pub grid_spacing: f64,
    /// Resolution of the population raster and simulated field.
    pub field_cell_size: f64,
    pub replicates: usize,
    pub seed: u64,
    pub regions_per_side: usize,
    pub region_size: f64,
    /// Expected number of cases over the whole study area at S ≡ 0.
    pub expected_cases: f64,
    pub weighting: Weighting,
    pub quadrature_mode: QuadratureMode,
    pub phi_grid: String,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub outer_iters: usize,
}

impl Default for SimScenario {
    fn default() -> Self {
        SimScenario {
            sigma: 0.706,
            phi: 800.0,
            grid_spacing: 300.0,
            field_cell_size: 100.0,
            replicates: 50,
            seed: 1,
            regions_per_side: 10,
            region_size: 600.0,
            expected_cases: 3000.0,
            weighting: Weighting::Population,
            quadrature_mode: QuadratureMode::NonAdaptive,
            phi_grid: "100:2000:20".into(),
            n_iter: 110_000,
            burn_in: 10_000,
            thin: 10,
            outer_iters: 3,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| SdaError::Config(format!("{key}: cannot parse '{value}'")))
}

impl SimScenario {
    /// Parses `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = SimScenario::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SdaError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            s.set(k.trim(), v.trim())?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sigma" => self.sigma = num(key, value)?,
            "phi" => self.phi = num(key, value)?,
            "grid_spacing" => self.grid_spacing = num(key, value)?,
            "field_cell_size" => self.field_cell_size = num(key, value)?,
            "replicates" | "B" => self.replicates = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "regions_per_side" => self.regions_per_side = num(key, value)?,
            "region_size" => self.region_size = num(key, value)?,
            "expected_cases" => self.expected_cases = num(key, value)?,
            "weighting" => self.weighting = value.parse()?,
            "quadrature_mode" => {
                self.quadrature_mode = match value {
                    "adaptive" => QuadratureMode::Adaptive,
                    "nonadaptive" | "non-adaptive" => QuadratureMode::NonAdaptive,
                    _ => return Err(SdaError::Config(format!("quadrature_mode: unknown '{value}'"))),
                }
            }
            "phi_grid" => self.phi_grid = value.to_string(),
            "n_iter" => self.n_iter = num(key, value)?,
            "burn_in" => self.burn_in = num(key, value)?,
            "thin" => self.thin = num(key, value)?,
            "outer_iters" => self.outer_iters = num(key, value)?,
            _ => return Err(SdaError::Config(format!("unknown scenario key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(SdaError::Config("sigma must be >= 0".into()));
        }
        if !(self.phi > 0.0) {
            return Err(SdaError::Config("phi must be positive".into()));
        }
        if self.replicates == 0 {
            return Err(SdaError::Config("replicates must be >= 1".into()));
        }
        if self.regions_per_side == 0 || !(self.region_size > 0.0) {
            return Err(SdaError::Config("layout needs at least one region of positive size".into()));
        }
        if !(self.field_cell_size > 0.0) || !(self.grid_spacing > 0.0) {
            return Err(SdaError::Config("cell sizes must be positive".into()));
        }
        if !(self.expected_cases > 0.0) {
            return Err(SdaError::Config("expected_cases must be positive".into()));
        }
        self.phi_grid()?;
        self.mcml_config().validate()
    }

    pub fn phi_grid(&self) -> Result<PhiGrid> {
        self.phi_grid.parse()
    }

    pub fn mcml_config(&self) -> crate::mcml::McmlConfig {
        crate::mcml::McmlConfig {
            chain: crate::latent::LatentChainConfig {
                n_iter: self.n_iter,
                burn_in: self.burn_in,
                thin: self.thin,
                ..Default::default()
            },
            outer_iters: self.outer_iters,
            ..Default::default()
        }
    }

    /// Canonical `key = value` text, one key per line in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mode = match self.quadrature_mode {
            QuadratureMode::Adaptive => "adaptive",
            QuadratureMode::NonAdaptive => "nonadaptive",
        };
        let weighting = match self.weighting {
            Weighting::Population => "population",
            Weighting::Uniform => "uniform",
        };
        let _ = writeln!(out, "sigma = {}", self.sigma);
        let _ = writeln!(out, "phi = {}", self.phi);
        let _ = writeln!(out, "grid_spacing = {}", self.grid_spacing);
        let _ = writeln!(out, "field_cell_size = {}", self.field_cell_size);
        let _ = writeln!(out, "replicates = {}", self.replicates);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "regions_per_side = {}", self.regions_per_side);
        let _ = writeln!(out, "region_size = {}", self.region_size);
        let _ = writeln!(out, "expected_cases = {}", self.expected_cases);
        let _ = writeln!(out, "weighting = {weighting}");
        let _ = writeln!(out, "quadrature_mode = {mode}");
        let _ = writeln!(out, "phi_grid = {}", self.phi_grid);
        let _ = writeln!(out, "n_iter = {}", self.n_iter);
        let _ = writeln!(out, "burn_in = {}", self.burn_in);
        let _ = writeln!(out, "thin = {}", self.thin);
        let _ = writeln!(out, "outer_iters = {}", self.outer_iters);
        out
    }
}
