use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use super::Kernel;
use crate::error::{Result, SdaError};
use crate::par;
use crate::quadrature::QuadratureSet;

/// Strictly increasing set of candidate φ values (metres).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiGrid {
    values: Vec<f64>,
}

impl Default for PhiGrid {
    /// 100 equally spaced values on [50, 2000] m.
    fn default() -> Self {
        PhiGrid::linspace(50.0, 2000.0, 100).expect("static grid is valid")
    }
}

impl PhiGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SdaError::Config("phi grid is empty".into()));
        }
        if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(SdaError::Config("phi grid values must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SdaError::Config("phi grid must be strictly increasing".into()));
        }
        Ok(PhiGrid { values })
    }

    pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Self> {
        match n {
            0 => Err(SdaError::Config("phi grid needs at least one value".into())),
            1 => PhiGrid::new(vec![lo]),
            _ => PhiGrid::new(
                (0..n)
                    .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                    .collect(),
            ),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Middle grid value (upper middle for even lengths).
    pub fn median(&self) -> f64 {
        self.values[self.values.len() / 2]
    }

    /// Index of `phi` on the grid (relative tolerance 1e-9).
    pub fn index_of(&self, phi: f64) -> Option<usize> {
        self.values
            .iter()
            .position(|&v| (v - phi).abs() <= 1e-9 * v.abs().max(1.0))
    }

    /// Grid value nearest to `phi`.
    pub fn nearest(&self, phi: f64) -> f64 {
        *self
            .values
            .iter()
            .min_by(|a, b| (*a - phi).abs().total_cmp(&(*b - phi).abs()))
            .expect("grid is non-empty")
    }
}

impl std::str::FromStr for PhiGrid {
    type Err = SdaError;

    /// Parses `lo:hi:n`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || SdaError::Config(format!("phi grid `{s}` is not of the form lo:hi:n"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        PhiGrid::linspace(lo, hi, n)
    }
}

/// Correlation matrix R(φ) and its factorizations. Σ = σ² R(φ).
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub phi: f64,
    /// R(φ) including any diagonal jitter.
    pub corr: DMatrix<f64>,
    /// Lower Cholesky factor of `corr`.
    pub chol: DMatrix<f64>,
    pub log_det: f64,
    pub inverse: DMatrix<f64>,
    /// Diagonal jitter added to reach positive definiteness (0 if none).
    pub jitter: f64,
    /// Highest refinement level used by any pair (1 for non-nested sets).
    pub max_level: usize,
}

impl CacheEntry {
    pub fn n(&self) -> usize {
        self.corr.nrows()
    }

    /// Factorizes `corr`, escalating diagonal jitter 1e-10 → 1e-6 if needed.
    pub fn factorize(phi: f64, corr: DMatrix<f64>, max_level: usize) -> Result<Self> {
        let mut jitter = 0.0;
        loop {
            let mut m = corr.clone();
            if jitter > 0.0 {
                for i in 0..m.nrows() {
                    m[(i, i)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::<f64, Dyn>::new(m.clone()) {
                let l = chol.l();
                let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
                let inverse = chol.inverse();
                if jitter > 0.0 {
                    log::warn!("phi={phi}: covariance needed diagonal jitter {jitter:e}");
                }
                return Ok(CacheEntry {
                    phi,
                    corr: m,
                    chol: l,
                    log_det,
                    inverse,
                    jitter,
                    max_level,
                });
            }
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
            if jitter > 1e-6 * (1.0 + 1e-9) {
                return Err(SdaError::NumericalDegeneracy {
                    phi,
                    message: "Cholesky failed with jitter up to 1e-6".into(),
                });
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheOptions {
    pub kernel: Kernel,
    /// Relative tolerance for the refinement loop over nested point sets.
    pub rel_tol_eps: f64,
}

impl Default for CacheOptions {
    fn default() -> Self {
        CacheOptions {
            kernel: Kernel::exponential(),
            rel_tol_eps: 1e-3,
        }
    }
}

/// Precomputed R(φ) with Cholesky factor, log-determinant and inverse for every grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceCache {
    grid: PhiGrid,
    kernel: Kernel,
    entries: Vec<CacheEntry>,
}

impl CovarianceCache {
    pub(crate) fn from_parts(grid: PhiGrid, kernel: Kernel, entries: Vec<CacheEntry>) -> Self {
        CovarianceCache { grid, kernel, entries }
    }

    pub fn grid(&self) -> &PhiGrid {
        &self.grid
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn entries(&self) -> &[CacheEntry] {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.first().map_or(0, CacheEntry::n)
    }

    pub fn entry_at(&self, idx: usize) -> &CacheEntry {
        &self.entries[idx]
    }

    pub fn entry(&self, phi: f64) -> Result<&CacheEntry> {
        self.grid
            .index_of(phi)
            .map(|i| &self.entries[i])
            .ok_or_else(|| SdaError::Config(format!("phi={phi} is not on the cached grid")))
    }
}

/// Pair values over the grid plus the deepest refinement level used.
struct PairRow {
    values: Vec<f64>,
    level: usize,
}

/// Builds the cache. Each region pair computes its distances once and
/// reuses them across the whole φ grid. Nested (adaptive) sets are refined
/// per pair and per φ until successive levels agree to `rel_tol_eps`.
pub fn build_cache(quads: &[QuadratureSet], grid: &PhiGrid, opts: &CacheOptions) -> Result<CovarianceCache> {
    let n = quads.len();
    if n == 0 {
        return Err(SdaError::Config("no quadrature sets".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let rows: Vec<PairRow> = par::try_map_range(pairs.len(), |k| {
        let (i, j) = pairs[k];
        pair_row(&quads[i], &quads[j], grid.values(), opts)
    })?;

    let entries = par::try_map_range(grid.len(), |g| {
        let mut corr = DMatrix::<f64>::zeros(n, n);
        let mut max_level = 1;
        for (&(i, j), row) in pairs.iter().zip(&rows) {
            corr[(i, j)] = row.values[g];
            corr[(j, i)] = row.values[g];
            max_level = max_level.max(row.level);
        }
        CacheEntry::factorize(grid.values()[g], corr, max_level)
    })?;
    Ok(CovarianceCache::from_parts(grid.clone(), opts.kernel, entries))
}

fn pair_row(a: &QuadratureSet, b: &QuadratureSet, phis: &[f64], opts: &CacheOptions) -> Result<PairRow> {
    let (la, lb) = (a.len(), b.len());
    let mut dist = Vec::with_capacity(la * lb);
    let mut wprod = Vec::with_capacity(la * lb);
    for (p, &wp) in a.points.iter().zip(&a.weights) {
        for (q, &wq) in b.points.iter().zip(&b.weights) {
            dist.push(p.dist(*q));
            wprod.push(wp * wq);
        }
    }
    let degenerate = || {
        SdaError::DegenerateWeight(format!(
            "weight products for ({}, {}) sum to zero",
            a.region_id, b.region_id
        ))
    };

    let levels = a.levels().min(b.levels());
    let nested = a.batch.is_some() && b.batch.is_some() && levels > 1;
    if !nested {
        let den: f64 = wprod.iter().sum();
        if !(den > 0.0) {
            return Err(degenerate());
        }
        let values = phis
            .iter()
            .map(|&phi| {
                dist.iter()
                    .zip(&wprod)
                    .map(|(&d, &w)| w * opts.kernel.corr(d, phi))
                    .sum::<f64>()
                    / den
            })
            .collect();
        return Ok(PairRow { values, level: 1 });
    }

    let mut values = Vec::with_capacity(phis.len());
    let mut deepest = 1;
    for &phi in phis {
        let (mut num, mut den) = (0.0, 0.0);
        let (mut used_a, mut used_b) = (0, 0);
        let mut old = f64::NAN;
        let mut value = f64::NAN;
        for level in 1..=levels {
            let (na, nb) = (a.level_len(level), b.level_len(level));
            // new rows against all columns, then old rows against new columns
            for r in used_a..na {
                for c in 0..nb {
                    let idx = r * lb + c;
                    num += wprod[idx] * opts.kernel.corr(dist[idx], phi);
                    den += wprod[idx];
                }
            }
            for r in 0..used_a {
                for c in used_b..nb {
                    let idx = r * lb + c;
                    num += wprod[idx] * opts.kernel.corr(dist[idx], phi);
                    den += wprod[idx];
                }
            }
            used_a = na;
            used_b = nb;
            if !(den > 0.0) {
                return Err(degenerate());
            }
            value = num / den;
            deepest = deepest.max(level);
            if level > 1 && (value == old || (old - value).abs() < opts.rel_tol_eps * value.abs()) {
                break;
            }
            old = value;
        }
        values.push(value);
    }
    Ok(PairRow { values, level: deepest })
}
