use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use sda_core::geometry::{load_partition_file, BBox, PartitionOptions};
use sda_core::latent::DataVector;
use sda_core::raster::{read_ascii_grid, ValueUnits};
use sda_core::{Partition, PopulationRaster, SdaError};

use crate::config::RunConfig;

/// Partition, population and region data for one run.
pub struct Inputs {
    pub partition: Partition,
    pub population: Option<PopulationRaster>,
    pub data: DataVector,
    pub covariate_names: Vec<String>,
}

impl Inputs {
    pub fn region_ids(&self) -> Vec<&str> {
        self.partition.regions().iter().map(|r| r.id()).collect()
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| SdaError::io(path, e).into())
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let header: Vec<String> = rdr
        .headers()
        .with_context(|| format!("reading header of {}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.first().map(String::as_str) != Some("region_id") {
        bail!("{}: first column must be region_id", path.display());
    }
    let rows = rdr
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("reading {}", path.display()))?;
    Ok((header, rows))
}

/// Maps each row to its region index, rejecting unknown or duplicated ids and gaps.
fn index_rows<'a>(path: &Path, partition: &Partition, rows: &'a [csv::StringRecord]) -> Result<Vec<&'a csv::StringRecord>> {
    let mut by_region: Vec<Option<&csv::StringRecord>> = vec![None; partition.len()];
    for row in rows {
        let id = row.get(0).unwrap_or("");
        let i = partition
            .index_of(id)
            .ok_or_else(|| anyhow!("{}: region '{id}' is not in the partition", path.display()))?;
        if by_region[i].replace(row).is_some() {
            bail!("{}: region '{id}' appears twice", path.display());
        }
    }
    by_region
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| anyhow!("{}: no row for region '{}'", path.display(), partition.regions()[i].id())))
        .collect()
}

pub fn read_counts(path: &Path, partition: &Partition) -> Result<Vec<u64>> {
    let (header, rows) = read_table(path)?;
    if header.len() != 2 || header[1] != "count" {
        bail!("{}: expected columns region_id,count", path.display());
    }
    index_rows(path, partition, &rows)?
        .iter()
        .map(|r| {
            r[1].parse::<u64>()
                .map_err(|_| anyhow!("{}: region '{}': count '{}' is not a non-negative integer", path.display(), &r[0], &r[1]))
        })
        .collect()
}

/// Returns covariate names and an n × q matrix.
pub fn read_covariates(path: &Path, partition: &Partition) -> Result<(Vec<String>, DMatrix<f64>)> {
    let (header, rows) = read_table(path)?;
    let names = header[1..].to_vec();
    if names.is_empty() {
        bail!("{}: no covariate columns", path.display());
    }
    let rows = index_rows(path, partition, &rows)?;
    let mut m = DMatrix::zeros(partition.len(), names.len());
    for (i, r) in rows.iter().enumerate() {
        for j in 0..names.len() {
            let cell = r.get(j + 1).unwrap_or("");
            m[(i, j)] = cell
                .parse()
                .map_err(|_| anyhow!("{}: region '{}', {}: '{cell}' is not a number", path.display(), &r[0], names[j]))?;
        }
    }
    Ok((names, m))
}

pub fn read_population(path: &Path, density: bool) -> Result<PopulationRaster> {
    let grid = read_ascii_grid(BufReader::new(open(path)?))?;
    let raster = PopulationRaster::from_ascii(grid)?;
    Ok(if density {
        raster.with_units(ValueUnits::DensityPerSquareMetre)
    } else {
        raster
    })
}

fn covers(outer: &BBox, inner: &BBox) -> bool {
    outer.min_x <= inner.min_x && outer.min_y <= inner.min_y && outer.max_x >= inner.max_x && outer.max_y >= inner.max_y
}

pub fn load(cfg: &RunConfig) -> Result<Inputs> {
    let partition = load_partition_file(&cfg.partition, PartitionOptions::default())?;
    let population = match &cfg.population {
        Some(p) => {
            let r = read_population(p, cfg.population_density)?;
            let (ext, bb) = (r.grid().extent(), partition.study_area_bbox());
            if !covers(&ext, &bb) {
                bail!(
                    "population raster extent [{}, {}] x [{}, {}] does not cover the study area [{}, {}] x [{}, {}]",
                    ext.min_x, ext.max_x, ext.min_y, ext.max_y, bb.min_x, bb.max_x, bb.min_y, bb.max_y
                );
            }
            Some(r)
        }
        None => None,
    };
    let y = read_counts(&cfg.counts, &partition)?;
    let n = partition.len();
    let offsets = match &population {
        Some(r) => partition
            .regions()
            .iter()
            .map(|reg| r.region_mass(reg))
            .collect::<sda_core::Result<Vec<_>>>()?,
        // without a raster the offsets are region areas
        None => partition.regions().iter().map(|r| r.area()).collect(),
    };
    let (covariate_names, design) = match &cfg.covariates {
        Some(p) => {
            let (names, x) = read_covariates(p, &partition)?;
            let mut d = DMatrix::from_element(n, names.len() + 1, 1.0);
            d.view_mut((0, 1), (n, names.len())).copy_from(&x);
            (names, d)
        }
        None => (Vec::new(), DMatrix::from_element(n, 1, 1.0)),
    };
    let data = DataVector::new(y, offsets, design)?;
    Ok(Inputs {
        partition,
        population,
        data,
        covariate_names,
    })
}
