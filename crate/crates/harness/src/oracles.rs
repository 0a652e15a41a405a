//! Reference values computed independently of the solvers.

use std::f64::consts::PI;

use fspde_core::quadrature::gauss_legendre;

/// `½(t^{2H} + s^{2H} − |t − s|^{2H})`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let p = 2.0 * hurst;
    0.5 * (t.powf(p) + s.powf(p) - (t - s).abs().powf(p))
}

/// `∫_0^1 r d(r²) = 2/3`.
pub const STIELTJES_R_DR2: f64 = 2.0 / 3.0;

/// Variance of the Ornstein–Uhlenbeck process `du = −λu dt + dW`, `u_0 = 0`.
pub fn ou_variance(lambda: f64, t: f64) -> f64 {
    -(-2.0 * lambda * t).exp_m1() / (2.0 * lambda)
}

/// `Var ∫_0^t e^{−λ(t−r)} dB^H_r = H(2H−1) ∫∫ e^{−λ(2t−r−q)} |r−q|^{2H−2} dr dq`.
///
/// Folding the square onto `q < r` and substituting `r − q = w^{1/(2H−1)}` removes
/// the diagonal singularity, leaving
/// `2H ∫_0^t ∫_0^{r^{2H−1}} e^{−λ(2t − 2r + w^{1/(2H−1)})} dw dr`.
pub fn additive_fbm_variance(lambda: f64, hurst: f64, t: f64) -> f64 {
    let e = 2.0 * hurst - 1.0;
    let inner = |r: f64| {
        let top = r.powf(e);
        if top == 0.0 {
            return 0.0;
        }
        gauss_legendre(|w| (-lambda * (2.0 * t - 2.0 * r + w.powf(1.0 / e))).exp(), 0.0, top, 16)
    };
    // the outer integrand behaves like r^{2H−1} near zero: dyadic panels towards 0
    let mut total = 0.0;
    let mut hi = t;
    for _ in 0..80 {
        total += gauss_legendre(inner, 0.5 * hi, hi, 2);
        hi *= 0.5;
    }
    2.0 * hurst * total
}

/// `b̄_k(x) = a sin x_k + B (d0 + d1 sin x_k)/(λ̄_k + c)` with Dirichlet eigenvalues on `[0, L]`.
#[allow(clippy::too_many_arguments)]
pub fn linear_bbar(k: usize, length: f64, x: f64, a: f64, b: f64, c: f64, d0: f64, d1: f64) -> f64 {
    let lambda = (k as f64 * PI / length).powi(2);
    a * x.sin() + b * (d0 + d1 * x.sin()) / (lambda + c)
}
