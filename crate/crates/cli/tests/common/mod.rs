#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const COUNTS: [u64; 4] = [12, 30, 7, 51];

/// Four 1 km squares in a 2×2 block with a 100 m population raster and one covariate.
/// Returns the path of the written `run.cfg`.
pub fn write_fixture(dir: &Path, extra: &str) -> PathBuf {
    let mut features = Vec::new();
    for (k, (i, j)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
        let (x0, y0) = (i as f64 * 1000.0, j as f64 * 1000.0);
        let (x1, y1) = (x0 + 1000.0, y0 + 1000.0);
        features.push(format!(
            r#"{{"type":"Feature","properties":{{"id":"r{k}"}},"geometry":{{"type":"Polygon","coordinates":[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]}}}}"#
        ));
    }
    fs::write(
        dir.join("regions.geojson"),
        format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, features.join(",")),
    )
    .unwrap();

    let mut counts = String::from("region_id,count\n");
    let mut covs = String::from("region_id,d\n");
    for (k, c) in COUNTS.iter().enumerate() {
        writeln!(counts, "r{k},{c}").unwrap();
        writeln!(covs, "r{k},{}", 10.0 * k as f64).unwrap();
    }
    fs::write(dir.join("counts.csv"), counts).unwrap();
    fs::write(dir.join("covariates.csv"), covs).unwrap();

    let mut grid = String::from("ncols 20\nnrows 20\nxllcorner 0\nyllcorner 0\ncellsize 100\nNODATA_value -9999\n");
    for row in 0..20 {
        let cells: Vec<String> = (0..20).map(|col| (5 + (row * 7 + col * 3) % 40).to_string()).collect();
        writeln!(grid, "{}", cells.join(" ")).unwrap();
    }
    fs::write(dir.join("population.asc"), grid).unwrap();

    let cfg = format!(
        "partition = regions.geojson\ncounts = counts.csv\ncovariates = covariates.csv\n\
         population = population.asc\nweighting = population\nphi_grid = 200:1500:6\n\
         n_iter = 12000\nburn_in = 2000\nthin = 10\nouter_iters = 2\n\
         prediction_spacing = 250\nthreshold = 1.5\nout = out\nseed = 11\n{extra}"
    );
    let path = dir.join("run.cfg");
    fs::write(&path, cfg).unwrap();
    path
}

pub const TINY_SCENARIO: &str = "replicates = 2\nseed = 5\nregions_per_side = 3\nregion_size = 400\n\
grid_spacing = 200\nfield_cell_size = 100\nexpected_cases = 600\nphi_grid = 100:1500:8\n\
n_iter = 12000\nburn_in = 2000\nthin = 10\nouter_iters = 2\n";
