//! Binary cache file: versioned header followed by little-endian f64 data.
//!
//! ```text
//! magic      8 bytes  "SDACOV\0\0"
//! version    u32
//! key        32 bytes (SHA-256 of the inputs the cache depends on)
//! kappa      f64
//! n, nphi    u64, u64
//! phis       nphi × f64
//! per φ:     jitter f64, log_det f64, max_level u64,
//!            corr, chol, inverse: n² × f64 each, column-major
//! ```

use std::io::{Read, Write};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use super::{CacheEntry, CovarianceCache, Kernel, PhiGrid};
use crate::error::{Result, SdaError};

pub const CACHE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SDACOV\0\0";

/// Key over the partition digest, quadrature seed and φ grid (plus any extra context).
pub fn cache_key(partition_digest: &[u8], quadrature_seed: u64, grid: &PhiGrid, extra: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((partition_digest.len() as u64).to_le_bytes());
    h.update(partition_digest);
    h.update(quadrature_seed.to_le_bytes());
    h.update((grid.len() as u64).to_le_bytes());
    for v in grid.values() {
        h.update(v.to_le_bytes());
    }
    h.update(extra);
    h.finalize().into()
}

pub fn write_cache<W: Write>(mut w: W, cache: &CovarianceCache, key: &[u8; 32]) -> std::io::Result<()> {
    let n = cache.n();
    w.write_all(MAGIC)?;
    w.write_all(&CACHE_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(key)?;
    w.write_all(&cache.kernel().kappa().to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(cache.grid().len() as u64).to_le_bytes())?;
    for v in cache.grid().values() {
        w.write_all(&v.to_le_bytes())?;
    }
    for e in cache.entries() {
        w.write_all(&e.jitter.to_le_bytes())?;
        w.write_all(&e.log_det.to_le_bytes())?;
        w.write_all(&(e.max_level as u64).to_le_bytes())?;
        for m in [&e.corr, &e.chol, &e.inverse] {
            for v in m.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a cache file, rejecting version or key mismatches.
pub fn read_cache<R: Read>(mut r: R, expected_key: &[u8; 32]) -> Result<CovarianceCache> {
    let ctx = "covariance cache";
    let io = |e: std::io::Error| SdaError::parse(ctx, e.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(SdaError::parse(ctx, "bad magic"));
    }
    let version = read_u32(&mut r).map_err(io)?;
    if version != CACHE_FORMAT_VERSION {
        return Err(SdaError::parse(ctx, format!("unsupported version {version}")));
    }
    let mut key = [0u8; 32];
    r.read_exact(&mut key).map_err(io)?;
    if &key != expected_key {
        return Err(SdaError::parse(ctx, "key mismatch (inputs changed)"));
    }
    let kernel = Kernel::matern(read_f64(&mut r).map_err(io)?)?;
    let n = read_u64(&mut r).map_err(io)? as usize;
    let nphi = read_u64(&mut r).map_err(io)? as usize;
    if n == 0 || n > 1 << 20 || nphi == 0 || nphi > 1 << 20 {
        return Err(SdaError::parse(ctx, "implausible dimensions"));
    }
    let phis = (0..nphi)
        .map(|_| read_f64(&mut r))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io)?;
    let grid = PhiGrid::new(phis)?;
    let mut entries = Vec::with_capacity(nphi);
    for &phi in grid.values() {
        let jitter = read_f64(&mut r).map_err(io)?;
        let log_det = read_f64(&mut r).map_err(io)?;
        let max_level = read_u64(&mut r).map_err(io)? as usize;
        let mut mats = Vec::with_capacity(3);
        for _ in 0..3 {
            let data = (0..n * n)
                .map(|_| read_f64(&mut r))
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(io)?;
            mats.push(DMatrix::from_vec(n, n, data));
        }
        let inverse = mats.pop().expect("three matrices");
        let chol = mats.pop().expect("three matrices");
        let corr = mats.pop().expect("three matrices");
        entries.push(CacheEntry {
            phi,
            corr,
            chol,
            log_det,
            inverse,
            jitter,
            max_level,
        });
    }
    Ok(CovarianceCache::from_parts(grid, kernel, entries))
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
