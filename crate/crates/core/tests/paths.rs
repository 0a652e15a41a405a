use approx::assert_relative_eq;
use proptest::prelude::*;

use fspde_core::fbm::{lambda_alpha_norm, sample_fbm_1d, FbmSampler};
use fspde_core::fracint::stieltjes_integral;
use fspde_core::mollify::{mollify_path, stop_path, stopping_time};
use fspde_core::rng::child_seed;
use fspde_core::stats::covariance_estimate;
use fspde_core::{Grid, Path, Path32};

#[test]
fn fbm_variance_at_unit_time_single_precision() {
    let grid = Grid::<f32>::uniform(1.0, 17).unwrap();
    let sampler = FbmSampler::new(0.75f32, &grid).unwrap();
    let ends: Vec<f32> = (0..4000).map(|i| { let p = sampler.sample(child_seed(3, i)); p.at(p.len() - 1) }).collect();
    let est = covariance_estimate(&ends, &ends);
    // Var B_1 = 1 for every H
    assert!(est.z_score(1.0) < 4.0, "{est:?}");
}

#[test]
fn fbm_increment_covariance_matches_closed_form() {
    let h = 0.8;
    let grid = Grid::uniform(1.0, 9).unwrap();
    let sampler = FbmSampler::new(h, &grid).unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for i in 0..20_000 {
        let p = sampler.sample(child_seed(4, i));
        a.push(p.at(2) - p.at(1));
        b.push(p.at(6) - p.at(5));
    }
    // E[(B_{2/8}-B_{1/8})(B_{6/8}-B_{5/8})] = ½ d^{2H} (|k+1|^{2H} + |k-1|^{2H} - 2k^{2H}), k = 4
    let d: f64 = 0.125;
    let k: f64 = 4.0;
    let exact = 0.5 * d.powf(2.0 * h) * ((k + 1.0).powf(2.0 * h) + (k - 1.0).powf(2.0 * h) - 2.0 * k.powf(2.0 * h));
    let est = covariance_estimate(&a, &b);
    assert!(est.z_score(exact) < 4.0, "{est:?} vs {exact}");
}

#[test]
fn stieltjes_matches_riemann_stieltjes_for_smooth_pairs() {
    let times = Grid::uniform(1.0, 2049).unwrap().into_times();
    let h = Path::from_fn(times.clone(), f64::sin).unwrap();
    let l = Path::from_fn(times.clone(), f64::cos).unwrap();
    // ∫_0^1 sin r d(cos r) = -∫_0^1 sin² r dr
    let exact = -(0.5 - (2.0f64).sin() / 4.0);
    let v = stieltjes_integral(&h, &l, 0.4, 0.0, 1.0).unwrap();
    assert!((v - exact).abs() < 1e-4, "{v} vs {exact}");

    let h = Path::from_fn(times.clone(), |r| r * r).unwrap();
    let l = Path::from_fn(times, |r| r).unwrap();
    let v = stieltjes_integral(&h, &l, 0.4, 0.25, 0.75).unwrap();
    let exact = (0.75f64.powi(3) - 0.25f64.powi(3)) / 3.0;
    assert!((v - exact).abs() < 1e-4, "{v} vs {exact}");
}

#[test]
fn young_bound_holds_for_fbm_pairs_single_precision() {
    let grid = Grid::<f32>::uniform(1.0, 129).unwrap();
    for p in 0..5u64 {
        let h: Path32 = sample_fbm_1d(0.7, &grid, child_seed(9, 2 * p)).unwrap();
        let l: Path32 = sample_fbm_1d(0.7, &grid, child_seed(9, 2 * p + 1)).unwrap();
        let v = stieltjes_integral(&h, &l, 0.4, 0.0, 1.0).unwrap();
        assert!(v.is_finite());
    }
}

#[test]
fn mollified_linear_path_lags_by_half_a_window() {
    let times = Grid::uniform(1.0, 1025).unwrap().into_times();
    let p = Path::from_fn(times, |t| 2.0 * t + 1.0).unwrap();
    let n = 16;
    let m = mollify_path(&p, n).unwrap();
    for (k, &t) in m.times().iter().enumerate() {
        if t >= 1.0 / n as f64 {
            assert_relative_eq!(m.at(k), 2.0 * (t - 0.5 / n as f64) + 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn stopped_path_is_frozen_after_tau() {
    let grid = Grid::uniform(1.0, 513).unwrap();
    let b = sample_fbm_1d(0.7, &grid, 21).unwrap();
    let q = Path::hilbert(b.times().to_vec(), 1, b.raw_values().to_vec()).unwrap();
    let tau = stopping_time(&q, 0.35, 0.5, 1.0).unwrap();
    let s = stop_path(&q, tau).unwrap();
    let k = s.require_index(tau).unwrap();
    assert!(s.raw_values()[k..].iter().all(|&v| v == q.raw_values()[k]));
    assert_eq!(&s.raw_values()[..=k], &q.raw_values()[..=k]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lambda_norm_is_absolutely_homogeneous(seed in 0u64..1000, c in -5.0f64..5.0) {
        let grid = Grid::uniform(1.0, 65).unwrap();
        let l = sample_fbm_1d(0.7, &grid, seed).unwrap();
        let base = lambda_alpha_norm(&l, 0.4, 0.0, 1.0).unwrap().lambda_norm;
        let scaled = lambda_alpha_norm(&l.scale(c), 0.4, 0.0, 1.0).unwrap().lambda_norm;
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-12 * (1.0 + base * c.abs()));
    }

    #[test]
    fn stieltjes_is_bilinear(seed in 0u64..1000, a in -3.0f64..3.0) {
        let grid = Grid::uniform(1.0, 65).unwrap();
        let h = sample_fbm_1d(0.7, &grid, seed).unwrap();
        let l = sample_fbm_1d(0.7, &grid, seed + 1000).unwrap();
        let base = stieltjes_integral(&h, &l, 0.4, 0.0, 1.0).unwrap();
        let scaled = stieltjes_integral(&h.scale(a), &l, 0.4, 0.0, 1.0).unwrap();
        prop_assert!((scaled - a * base).abs() <= 1e-10 * (1.0 + base.abs()));
    }
}
