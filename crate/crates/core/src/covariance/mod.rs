//! Correlation kernels, the quadrature approximation of region-pair
//! correlations, and the per-φ covariance cache.

mod cache;
mod file;
mod kernel;
mod pair;

pub use cache::{build_cache, CacheEntry, CacheOptions, CovarianceCache, PhiGrid};
pub use file::{cache_key, read_cache, write_cache, CACHE_FORMAT_VERSION};
pub use kernel::{bessel_k, matern_corr, Kernel};
pub use pair::{point_region_corr, region_pair_corr};
