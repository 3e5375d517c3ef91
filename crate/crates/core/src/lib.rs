//! Spatially discrete approximation (SDA) to log-Gaussian Cox processes for
//! spatially aggregated disease counts.
//!
//! The log-intensity of an LGCP is replaced by its weighted average over each
//! region of a partition, which turns the aggregated counts into a Poisson
//! log-linear mixed model. This crate provides the pieces needed to fit and use
//! that model:
//!
//! * [`geometry`] and [`raster`]: regions, partitions and population surfaces.
//! * [`quadrature`]: inhibition-sampled point sets used for every region integral.
//! * [`covariance`]: correlation kernels, the region-pair double sum and the
//!   per-φ covariance cache.
//! * [`latent`]: Laplace mode and MALA sampling of the linear predictor given counts.
//! * [`mcml`]: Monte Carlo maximum likelihood, profile likelihood for φ and its CI.
//! * [`predict`]: region-level incidence and spatially continuous risk prediction.
//! * [`sim`]: the simulation harness and the bias/RMSE/WPI/CP metric suite.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the `parallel`
//! feature is enabled (the default) and plain iterators otherwise.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod error;
pub mod geometry;
pub mod latent;
pub mod mcml;
pub mod par;
pub mod predict;
pub mod quadrature;
pub mod raster;
pub mod seed;
pub mod sim;
pub mod stats;

pub use error::{Result, SdaError};
pub use geometry::{Partition, Point, Region};
pub use raster::PopulationRaster;
