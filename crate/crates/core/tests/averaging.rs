use fspde_core::fastslow::{
    estimate_invariant_drift, validate_conditions, AveragingExperiment, BbarProvider, DissipativityParams,
    FastSlowConfig, InvariantBudget, InvariantMethod, LinearTestSystem,
};
use fspde_core::semigroup::dirichlet_laplacian;
use fspde_core::stats::mean_estimate;

/// Mean of the Gaussian stationary law of `dY = (−λY − cY + d) dt + γ dW`, pushed through `b`.
fn bbar_oracle(k: usize, x: f64, s: &LinearTestSystem<f64>) -> f64 {
    let lambda = (k as f64 * std::f64::consts::PI).powi(2);
    let mean_y = (s.fast_offset + s.fast_coupling * x.sin()) / (lambda + s.fast_decay);
    s.slow_sine * x.sin() + s.slow_fast * mean_y
}

#[test]
fn analytic_drift_matches_the_stationary_mean() {
    let s = LinearTestSystem::<f64>::canonical();
    let op = dirichlet_laplacian(4, 1.0).unwrap();
    let bbar = s.analytic_bbar(&op).unwrap();
    for (k, b) in bbar.iter().enumerate() {
        for x in [-1.0, 0.0, 0.3, 2.0] {
            assert!((b.eval(x) - bbar_oracle(k + 1, x, &s)).abs() < 1e-14);
        }
    }
}

#[test]
fn ensemble_estimate_agrees_with_closed_form() {
    let s = LinearTestSystem {
        fast_offset: 1.0,
        fast_coupling: 0.5,
        ..LinearTestSystem::canonical()
    };
    let op = dirichlet_laplacian(2, 1.0).unwrap();
    let params = s.derived_params(2).unwrap();
    let x = [0.4, -0.2];
    let budget = InvariantBudget {
        method: InvariantMethod::Ensemble,
        burn_in: None,
        horizon: 0.0,
        dt: 0.002,
        chains: 4000,
        batches: 0,
        rel_tolerance: 0.05,
        seed: 17,
    };
    let est = estimate_invariant_drift(&s, &op, &params, &x, &budget).unwrap();
    for k in 0..2 {
        let exact = bbar_oracle(k + 1, x[k], &s);
        assert!((est.drift[k] - exact).abs() < 4.0 * est.stderr[k], "{k}: {} vs {exact}", est.drift[k]);
    }
}

#[test]
fn gate_messages_name_the_failed_inequality() {
    let s = LinearTestSystem::<f64>::canonical();
    let op = dirichlet_laplacian(2, 1.0).unwrap();
    let good = s.derived_params(2).unwrap();
    assert!(validate_conditions(&s, &good, &op, 64, 1).passed());
    let bad = DissipativityParams { c3: 20.0, ..good };
    let msg = validate_conditions(&s, &bad, &op, 64, 1).rejection().unwrap();
    assert!(msg.contains("2*lambda_1^2/(2+lambda_1)"), "{msg}");
}

#[test]
fn averaging_error_shrinks_with_epsilon() {
    let base = FastSlowConfig::canonical(0.1, 2, 16, 5).unwrap();
    let bbar = BbarProvider::analytic(&base.system, &base.operator).unwrap();
    let err = |eps: f64| {
        let exp = AveragingExperiment::new(base.with_epsilon(eps), bbar.clone()).unwrap();
        let e: Vec<f64> = (0..16).map(|r| exp.replicate(r).unwrap()).collect();
        mean_estimate(&e).mean
    };
    let (coarse, fine) = (err(0.1), err(0.01));
    assert!(fine < 0.5 * coarse, "{coarse} -> {fine}");
}
