use std::f64::consts::PI;

use approx::assert_relative_eq;

use fspde_core::fbm::QfbmSpec;
use fspde_core::fracint::FracExponents;
use fspde_core::semigroup::{dirichlet_laplacian, semigroup_apply};
use fspde_core::spde::{sample_noise, solve_mild, CoefficientSet, MildSolveConfig, SineAffine};

#[test]
fn dirichlet_spectrum_on_a_longer_interval() {
    let op = dirichlet_laplacian(3, 2.0).unwrap();
    for (k, &l) in op.eigenvalues().iter().enumerate() {
        let n = (k + 1) as f64;
        assert_relative_eq!(l, (n * PI / 2.0).powi(2), max_relative = 1e-14);
    }
}

#[test]
fn semigroup_property() {
    let op = dirichlet_laplacian(5, 1.0).unwrap();
    let u = [1.0, -2.0, 0.5, 3.0, 0.1];
    let ab = semigroup_apply(&op, 0.03, &semigroup_apply(&op, 0.02, &u).unwrap()).unwrap();
    let direct = semigroup_apply(&op, 0.05, &u).unwrap();
    for (x, y) in ab.iter().zip(&direct) {
        assert_relative_eq!(x, y, max_relative = 1e-13);
    }
}

fn config(modes: usize, dt: f64) -> MildSolveConfig<f64> {
    MildSolveConfig {
        operator: dirichlet_laplacian(modes, 1.0).unwrap(),
        exponents: FracExponents::defaults(0.7),
        dt,
        horizon: 0.5,
        u0: vec![1.0; modes],
        noise: QfbmSpec::new(0.7, 3.0, modes).unwrap(),
        scheme: Default::default(),
    }
}

#[test]
fn constant_forcing_relaxes_to_its_steady_state() {
    // du = (-λu + 1) dt has u(t) = 1/λ + (u0 - 1/λ) e^{-λt}; exponential Euler is exact here
    let cfg = config(3, 1.0 / 256.0);
    let noise = sample_noise(&cfg, 1).unwrap();
    let coeffs = CoefficientSet::new(SineAffine::constant(1.0), SineAffine::zero(), SineAffine::zero());
    let u = solve_mild(&cfg, &coeffs, &noise).unwrap();
    let last = u.len() - 1;
    for (k, &l) in cfg.operator.eigenvalues().iter().enumerate() {
        let exact = 1.0 / l + (1.0 - 1.0 / l) * (-l * 0.5f64).exp();
        assert_relative_eq!(u.value(last)[k], exact, max_relative = 1e-12);
    }
}

#[test]
fn linear_damping_converges_at_first_order() {
    // f(u) = -c u adds c to every eigenvalue
    let c = 3.0;
    let coeffs = CoefficientSet::new(
        SineAffine { constant: 0.0, sine: 0.0, linear: c },
        SineAffine::zero(),
        SineAffine::zero(),
    );
    let err = |dt: f64| {
        let cfg = config(2, dt);
        let u = solve_mild(&cfg, &coeffs, &sample_noise(&cfg, 1).unwrap()).unwrap();
        let last = u.len() - 1;
        cfg.operator
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(k, &l)| (u.value(last)[k] - (-(l + c) * 0.5).exp()).abs())
            .fold(0.0, f64::max)
    };
    let ratio = err(1.0 / 200.0) / err(1.0 / 400.0);
    assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
}

#[test]
fn solution_is_reproducible_per_seed() {
    let cfg = config(4, 1.0 / 64.0);
    let coeffs = CoefficientSet::new(
        SineAffine { constant: 0.2, sine: 1.0, linear: 0.0 },
        SineAffine::constant(0.3),
        SineAffine::constant(0.4),
    );
    let a = solve_mild(&cfg, &coeffs, &sample_noise(&cfg, 8).unwrap()).unwrap();
    let b = solve_mild(&cfg, &coeffs, &sample_noise(&cfg, 8).unwrap()).unwrap();
    let c = solve_mild(&cfg, &coeffs, &sample_noise(&cfg, 9).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
