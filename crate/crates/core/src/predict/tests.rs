use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::covariance::{build_cache, CacheOptions, CovarianceCache, PhiGrid};
use crate::quadrature::Weighting;

fn qset(id: &str, pts: &[(f64, f64)]) -> QuadratureSet {
    QuadratureSet {
        region_id: id.into(),
        points: pts.iter().map(|&p| p.into()).collect(),
        weights: vec![1.0; pts.len()],
        weighting: Weighting::Uniform,
        batch: None,
    }
}

fn sample_from(draws: DMatrix<f64>) -> LatentSample {
    let n = draws.nrows();
    LatentSample {
        retained: (0..draws.ncols()).map(|j| (j, true)).collect(),
        draws,
        acceptance_rate: 0.5,
        eta_hat: DVector::zeros(n),
        sigma_hat: DMatrix::identity(n, n),
        step_size: 1.0,
        warning: None,
    }
}

fn cache_for(quads: &[QuadratureSet], phi: f64) -> CovarianceCache {
    build_cache(quads, &PhiGrid::new(vec![phi]).unwrap(), &CacheOptions::default()).unwrap()
}

#[test]
fn cross_cov_hand_values() {
    let params = ModelParams::new(vec![0.0], 2.5, 1.0).unwrap();
    let k = Kernel::exponential();
    let single = [qset("a", &[(3.0, 4.0)])];
    let c = cross_cov_vector(Point::new(3.0, 4.0), &single, &params, k).unwrap();
    assert_eq!(c[0], 2.5);
    let far = cross_cov_vector(Point::new(53.0, 4.0), &single, &params, k).unwrap();
    assert!(far[0] < 1e-20 * 2.5);
    let two = [qset("b", &[(1.0, 0.0), (0.0, 3.0)])];
    let c = cross_cov_vector(Point::new(0.0, 0.0), &two, &params, k).unwrap();
    let want = 2.5 * ((-1.0f64).exp() + (-3.0f64).exp()) / 2.0;
    assert!((c[0] - want).abs() < 1e-15);
}

#[test]
fn exact_at_single_point_support() {
    let quads = [qset("a", &[(0.0, 0.0)]), qset("b", &[(2.0, 0.0)])];
    let cache = cache_for(&quads, 1.5);
    let data = DataVector::intercept_only(vec![1, 2], vec![1.0, 1.0]).unwrap();
    let params = ModelParams::new(vec![0.4], 0.9, 1.5).unwrap();
    let mut rng = crate::seed::rng(1);
    let draws = sample_from(DMatrix::from_fn(2, 50, |_, _| rng.sample::<f64, _>(StandardNormal)));
    let p = SurfacePredictor::new(&draws, &params, &data, cache.entry_at(0), &quads, Kernel::exponential()).unwrap();
    let (means, var) = p.conditional(Point::new(2.0, 0.0)).unwrap();
    assert!(var.abs() < 1e-12);
    let s = p.sample(Point::new(2.0, 0.0), 9).unwrap();
    for j in 0..50 {
        let want = draws.draws[(1, j)] - 0.4;
        assert!((means[j] - want).abs() < 1e-12);
        assert!((s[j] - want).abs() < 1e-5);
    }
}

#[test]
fn vanishing_variance_gives_unit_risk() {
    let quads = [qset("a", &[(0.0, 0.0), (1.0, 1.0)]), qset("b", &[(3.0, 0.0)])];
    let cache = cache_for(&quads, 2.0);
    let data = DataVector::intercept_only(vec![0, 0], vec![1.0, 1.0]).unwrap();
    let params = ModelParams::new(vec![-0.2], 1e-12, 2.0).unwrap();
    let draws = sample_from(DMatrix::from_element(2, 200, -0.2));
    let p = SurfacePredictor::new(&draws, &params, &data, cache.entry_at(0), &quads, Kernel::exponential()).unwrap();
    let mut grid = PredictionGrid::from_points(vec![Point::new(0.5, 0.5), Point::new(10.0, 2.0)]);
    predict_surface(&p, &mut grid, 3).unwrap();
    for o in grid.outputs().unwrap() {
        assert!((o.mean - 1.0).abs() < 1e-5 && o.sd < 1e-5, "{o:?}");
    }
}

#[test]
fn two_region_matches_dense_conditional_gaussian() {
    let quads = [qset("a", &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]), qset("b", &[(3.0, 0.5), (4.0, 1.0)])];
    let cache = cache_for(&quads, 2.0);
    let data = DataVector::intercept_only(vec![0, 0], vec![1.0, 1.0]).unwrap();
    let params = ModelParams::new(vec![0.3], 1.4, 2.0).unwrap();
    let big_n = 20_000;
    let mut rng = crate::seed::rng(5);
    let draws = sample_from(DMatrix::from_fn(2, big_n, |_, _| 0.3 + rng.sample::<f64, _>(StandardNormal)));
    let entry = cache.entry_at(0);
    let p = SurfacePredictor::new(&draws, &params, &data, entry, &quads, Kernel::exponential()).unwrap();
    let x = Point::new(1.5, 0.7);

    // oracle: direct formulas with Σ = σ²R inverted by LU
    let sigma = &entry.corr * params.sigma2;
    let sigma_inv = sigma.clone().lu().try_inverse().unwrap();
    let c = DVector::from_fn(2, |i, _| {
        let q = &quads[i];
        let s: f64 = q.points.iter().map(|pt| (-pt.dist(x) / 2.0).exp()).sum();
        params.sigma2 * s / q.len() as f64
    });
    let v2 = params.sigma2 - c.dot(&(&sigma_inv * &c));
    let cond_means: Vec<f64> = draws
        .draws
        .column_iter()
        .map(|e| c.dot(&(&sigma_inv * (e.clone_owned() - DVector::from_element(2, 0.3)))))
        .collect();

    let s = p.sample(x, 77).unwrap();
    let resid: Vec<f64> = s.iter().zip(&cond_means).map(|(a, b)| a - b).collect();
    let nn = big_n as f64;
    let mean_resid = crate::stats::mean(&resid);
    assert!(mean_resid.abs() < 3.0 * (v2 / nn).sqrt(), "{mean_resid}");
    let var_resid = resid.iter().map(|r| r * r).sum::<f64>() / nn;
    assert!((var_resid - v2).abs() < 3.0 * v2 * (2.0 / nn).sqrt(), "{var_resid} vs {v2}");
    let (m, v) = p.conditional(x).unwrap();
    assert!((v - v2).abs() < 1e-12);
    assert!(m.iter().zip(&cond_means).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn surface_over_partition_is_bounded_and_reproducible() {
    let part = Partition::grid(Point::new(0.0, 0.0), 100.0, 2, 2).unwrap();
    let quads: Vec<QuadratureSet> = part
        .regions()
        .iter()
        .map(|r| {
            let b = r.bbox();
            qset(r.id(), &[(b.min_x + 25.0, b.min_y + 25.0), (b.min_x + 75.0, b.min_y + 75.0)])
        })
        .collect();
    let cache = cache_for(&quads, 80.0);
    let data = DataVector::intercept_only(vec![1, 4, 2, 0], vec![2.0; 4]).unwrap();
    let params = ModelParams::new(vec![0.0], 0.5, 80.0).unwrap();
    let mut rng = crate::seed::rng(2);
    let draws = sample_from(DMatrix::from_fn(4, 300, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal)));
    let p = SurfacePredictor::new(&draws, &params, &data, cache.entry_at(0), &quads, Kernel::exponential()).unwrap();
    let mut grid = PredictionGrid::over_partition(&part, 30.0).unwrap().with_threshold(1.2);
    assert_eq!(grid.len(), 49);
    for c in grid.centers() {
        let (_, v) = p.conditional(*c).unwrap();
        assert!((0.0..=0.5).contains(&v));
    }
    predict_surface(&p, &mut grid, 4).unwrap();
    let mut again = PredictionGrid::over_partition(&part, 30.0).unwrap().with_threshold(1.2);
    predict_surface(&p, &mut again, 4).unwrap();
    assert_eq!(grid, again);
    for o in grid.outputs().unwrap() {
        assert!(o.mean > 0.0 && o.sd >= 0.0 && o.lo95 <= o.hi95);
        assert!((0.0..=1.0).contains(&o.exceedance.unwrap()));
    }

    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    grid.write_ascii(&mut a, &mut b, Some(&mut c)).unwrap();
    let parsed = crate::raster::read_ascii_grid(a.as_slice()).unwrap();
    assert_eq!(parsed.grid.ncols, 7);
    assert!(String::from_utf8(c).unwrap().contains("NODATA_value -9999"));
    let mut csv = Vec::new();
    grid.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("x,y,mean,sd,lo95,hi95,exceedance\n"));
    assert_eq!(text.lines().count(), 50);
}

#[test]
fn region_predictions() {
    let data = DataVector::intercept_only(vec![0, 0], vec![3.0, 7.0]).unwrap();
    let zero = sample_from(DMatrix::zeros(2, 40));
    let r = predict_regions(&zero, &data).unwrap();
    assert_eq!(r.regions[0].mean, 3.0);
    assert_eq!(r.regions[1].lo95, 7.0);
    assert_eq!(r.regions[1].hi95, 7.0);
    assert_eq!(r.regions[1].sd, 0.0);

    let etas: Vec<f64> = (0..101).map(|k| -1.0 + 0.02 * k as f64).collect();
    let draws = sample_from(DMatrix::from_fn(2, 101, |_, j| etas[j]));
    let r = predict_regions(&draws, &data).unwrap();
    // type 7 quantile at 0.025 of 101 sorted values sits at index 2.5
    let want_lo = 3.0 * (0.5 * (etas[2].exp() + etas[3].exp()));
    assert!((r.regions[0].lo95 - want_lo).abs() < 1e-12);

    let doubled = DataVector::intercept_only(vec![0, 0], vec![6.0, 14.0]).unwrap();
    let r2 = predict_regions(&draws, &doubled).unwrap();
    for (a, b) in r.regions.iter().zip(&r2.regions) {
        assert!((2.0 * a.mean - b.mean).abs() < 1e-12);
        assert!((2.0 * a.lo95 - b.lo95).abs() < 1e-12 && (2.0 * a.hi95 - b.hi95).abs() < 1e-12);
    }
    let mut buf = Vec::new();
    r.write_csv(&mut buf, &["a", "b"]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("region_id,mean,sd,lo95,hi95\na,"));
}

#[test]
fn inconsistent_cache_is_detected() {
    // cache built from one quadrature, predictions from another
    let quads = [qset("a", &[(0.0, 0.0)]), qset("b", &[(0.1, 0.0)])];
    let cache = cache_for(&quads, 5.0);
    let other = [qset("a", &[(0.0, 0.0)]), qset("b", &[(0.0, 0.0)])];
    let data = DataVector::intercept_only(vec![0, 0], vec![1.0, 1.0]).unwrap();
    let params = ModelParams::new(vec![0.0], 1.0, 5.0).unwrap();
    let draws = sample_from(DMatrix::zeros(2, 10));
    let p = SurfacePredictor::new(&draws, &params, &data, cache.entry_at(0), &other, Kernel::exponential()).unwrap();
    assert!(matches!(
        p.conditional(Point::new(0.0, 0.0)),
        Err(SdaError::NumericalConsistency(_))
    ));
}
