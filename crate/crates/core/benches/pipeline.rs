//! Run once per build to compare the data-parallel and sequential paths:
//!
//! ```text
//! cargo bench -p sda-core
//! cargo bench -p sda-core --no-default-features
//! ```
//!
//! Benchmark ids carry the mode so both runs land side by side in the report.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sda_core::covariance::{build_cache, CacheOptions, PhiGrid};
use sda_core::geometry::{Partition, Point};
use sda_core::latent::{run_mala, DataVector, LatentChainConfig};
use sda_core::mcml::{fit, McmlConfig, ModelParams};
use sda_core::predict::{predict_surface, PredictionGrid, SurfacePredictor};
use sda_core::quadrature::{build_quadrature, QuadratureConfig, UniformWeight};

const MODE: &str = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };

fn setup(side: usize) -> (Partition, Vec<sda_core::quadrature::QuadratureSet>) {
    let partition = Partition::grid(Point::new(0.0, 0.0), 500.0, side, side).unwrap();
    let quads = build_quadrature(&partition, &UniformWeight, &QuadratureConfig::for_partition(&partition), 1).unwrap();
    (partition, quads)
}

fn short_chain() -> LatentChainConfig {
    LatentChainConfig {
        n_iter: 11_000,
        burn_in: 1000,
        thin: 10,
        ..Default::default()
    }
}

fn data(n: usize) -> DataVector {
    DataVector::intercept_only((0..n as u64).map(|i| 5 + (i * 7) % 13).collect(), vec![1.0; n]).unwrap()
}

fn benches(c: &mut Criterion) {
    let (partition, quads) = setup(8);
    let grid = PhiGrid::linspace(200.0, 2000.0, 10).unwrap();
    let opts = CacheOptions::default();

    c.bench_function(&format!("quadrature_64_regions/{MODE}"), |b| {
        let config = QuadratureConfig::for_partition(&partition);
        b.iter(|| build_quadrature(black_box(&partition), &UniformWeight, &config, 1).unwrap())
    });

    c.bench_function(&format!("cache_64_regions_10_phi/{MODE}"), |b| {
        b.iter(|| build_cache(black_box(&quads), &grid, &opts).unwrap())
    });

    let cache = build_cache(&quads, &grid, &opts).unwrap();
    let d = data(partition.len());
    let config = McmlConfig {
        chain: short_chain(),
        outer_iters: 1,
        ..Default::default()
    };
    let mut group = c.benchmark_group("mcml");
    group.sample_size(10);
    group.bench_function(format!("fit_64_regions_10_phi/{MODE}"), |b| {
        b.iter(|| fit(black_box(&d), &cache, &config, 2).unwrap())
    });
    group.finish();

    let params = ModelParams::new(vec![1.5], 0.5, 800.0).unwrap();
    let entry = cache.entry(800.0).unwrap();
    let draws = run_mala(&d, &params, entry, &short_chain(), 3).unwrap();
    let predictor = SurfacePredictor::new(&draws, &params, &d, entry, &quads, cache.kernel()).unwrap();
    let mut group = c.benchmark_group("predict");
    group.sample_size(10);
    group.bench_function(format!("surface_256_cells/{MODE}"), |b| {
        b.iter(|| {
            let mut surface = PredictionGrid::over_partition(&partition, 250.0).unwrap();
            predict_surface(&predictor, &mut surface, 4).unwrap();
            surface
        })
    });
    group.finish();
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
