//! Weyl fractional derivatives, the generalized Stieltjes (Zähle) integral and
//! the α-norm family.
//!
//! All singular kernels go through [`PowerKernel`] product quadrature. The
//! integral, `Λ_α` and `|h|_{α,1}` share their discretisations, so the bound
//! `|∫ h dl| ≤ Λ_α(l) |h|_{α,1}` holds exactly for the discrete quantities.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fbm::lambda_constant;
use crate::path::{same_grid, Path};
use crate::quadrature::{DistancePower, PowerKernel};
use crate::scalar::{distance, norm, Scalar};

/// The exponent family `(α, β, α′, ϖ)` used by the solution theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracExponents<T> {
    pub alpha: T,
    pub beta: T,
    pub alpha_prime: T,
    pub holder: T,
}

impl<T: Scalar> FracExponents<T> {
    /// Midpoints of the admissible intervals for Hurst index `hurst`.
    pub fn defaults(hurst: T) -> Self {
        let half = T::lit(0.5);
        let alpha = crate::fbm::default_alpha(hurst);
        let beta = (half + T::one() - alpha) * half;
        let alpha_prime = (alpha + T::one() - beta) * half;
        let holder = (T::one() - alpha + hurst) * half;
        Self {
            alpha,
            beta,
            alpha_prime,
            holder,
        }
    }

    pub fn validate(&self, hurst: T) -> Result<()> {
        let one = T::one();
        let half = T::lit(0.5);
        if !(self.alpha > one - hurst && self.alpha < half) {
            return Err(param(format!(
                "alpha must lie in (1-H, 1/2) = ({}, 0.5), got {}",
                one - hurst,
                self.alpha
            )));
        }
        if !(self.beta > half && self.beta < one - self.alpha) {
            return Err(param(format!(
                "beta must lie in (1/2, 1-alpha) = (0.5, {}), got {}",
                one - self.alpha,
                self.beta
            )));
        }
        if !(self.alpha_prime > self.alpha && self.alpha_prime < one - self.beta) {
            return Err(param(format!(
                "alpha_prime must lie in (alpha, 1-beta) = ({}, {}), got {}",
                self.alpha,
                one - self.beta,
                self.alpha_prime
            )));
        }
        if !(self.holder > one - self.alpha && self.holder < hurst) {
            return Err(param(format!(
                "holder exponent must lie in (1-alpha, H) = ({}, {}), got {}",
                one - self.alpha,
                hurst,
                self.holder
            )));
        }
        Ok(())
    }
}

fn check_order<T: Scalar>(order: T) -> Result<()> {
    if order > T::zero() && order < T::one() {
        Ok(())
    } else {
        Err(param(format!("fractional order must lie in (0, 1), got {order}")))
    }
}

fn check_small_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::lit(0.5) {
        Ok(())
    } else {
        Err(param(format!("alpha must lie in (0, 1/2), got {alpha}")))
    }
}

/// `D_{a+}^α h(t) = [h(t)/(t-a)^α + α ∫_a^t (h(t)-h(ζ))/(t-ζ)^{α+1} dζ] / Γ(1-α)`,
/// one entry per component of `h`.
pub fn weyl_left_derivative<T: Scalar>(h: &Path<T>, alpha: T, a: T, t: T) -> Result<Vec<T>> {
    check_order(alpha)?;
    if !(a < t) {
        return Err(Error::Domain {
            time: t.to_f64_lossy(),
            start: a.to_f64_lossy(),
            end: h.end().to_f64_lossy(),
        });
    }
    let lo = h.require_index(a)?;
    let k = h.require_index(t)?;
    let times = h.times();
    let kernel = PowerKernel::new(times, T::one() + alpha);
    let gamma = (T::one() - alpha).gamma_fn();
    let lead = (times[k] - times[lo]).powf(-alpha);
    Ok((0..h.dim())
        .map(|c| {
            let v = |j: usize| h.value(j)[c];
            let tail = kernel.backward(|j| v(k) - v(j), lo, k);
            (v(k) * lead + alpha * tail) / gamma
        })
        .collect())
}

/// Real part of the right Weyl derivative of order `ν` of `l_{c-}` at `t < c`:
/// `[(l(t)-l(c))/(c-t)^ν + ν ∫_t^c (l(t)-l(ζ))/(ζ-t)^{ν+1} dζ] / Γ(1-ν)`.
///
/// The complex unit `(-1)^ν` is not included; it cancels against the left
/// derivative's phase in [`stieltjes_integral`].
pub fn weyl_right_derivative<T: Scalar>(l: &Path<T>, order: T, c: T, t: T) -> Result<Vec<T>> {
    check_order(order)?;
    if !(t < c) {
        return Err(Error::Domain {
            time: t.to_f64_lossy(),
            start: l.start().to_f64_lossy(),
            end: c.to_f64_lossy(),
        });
    }
    let k = l.require_index(t)?;
    let hi = l.require_index(c)?;
    let times = l.times();
    let kernel = PowerKernel::new(times, T::one() + order);
    let gamma = (T::one() - order).gamma_fn();
    let lead = (times[hi] - times[k]).powf(-order);
    Ok((0..l.dim())
        .map(|comp| {
            let v = |j: usize| l.value(j)[comp];
            let tail = kernel.forward(|j| v(k) - v(j), k, hi);
            ((v(k) - v(hi)) * lead + order * tail) / gamma
        })
        .collect())
}

/// Kernels shared by the Stieltjes integral and the `|h|_{α,1}` seminorm on one grid.
#[derive(Debug, Clone)]
pub struct FracKernels<T> {
    alpha: T,
    /// `(ζ - s)^{-α}` outer weight of the `h(r)/(r-s)^α` term.
    outer: PowerKernel<T>,
    /// `(r - q)^{-(1+α)}` for the inner difference integral of `D_{s+}^α h`.
    inner: PowerKernel<T>,
    /// `(ζ - r)^{-(2-α)}` for the right derivative.
    right: PowerKernel<T>,
    right_lead: DistancePower<T>,
    times: Vec<T>,
}

impl<T: Scalar> FracKernels<T> {
    pub fn new(times: &[T], alpha: T) -> Self {
        let one = T::one();
        Self {
            alpha,
            outer: PowerKernel::new(times, alpha),
            inner: PowerKernel::new(times, one + alpha),
            right: PowerKernel::new(times, T::lit(2.0) - alpha),
            right_lead: DistancePower::new(times, one - alpha),
            times: times.to_vec(),
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// `Γ(α) · D_{t-}^{1-α} l_{t-}(r_k)` (real part) for `k ∈ [lo, hi]`; zero at `k = hi`.
    fn right_profile(&self, l: &[T], lo: usize, hi: usize) -> Vec<T> {
        let one = T::one();
        let mut out = vec![T::zero(); hi - lo + 1];
        for k in lo..hi {
            let tail = self.right.forward(|j| l[k] - l[j], k, hi);
            out[k - lo] = (l[k] - l[hi]) * self.right_lead.get(k, hi) + (one - self.alpha) * tail;
        }
        out
    }

    /// `∫_{r_lo}^{r_k} (h(r_k) - h(q)) / (r_k - q)^{1+α} dq`, componentwise for one scalar series.
    fn inner_integral(&self, h: &[T], lo: usize, k: usize) -> T {
        self.inner.backward(|j| h[k] - h[j], lo, k)
    }

    /// Trapezoid weights on `[lo, hi]`.
    fn trapezoid(&self, lo: usize, hi: usize) -> Vec<T> {
        let half = T::lit(0.5);
        let mut w = vec![T::zero(); hi - lo + 1];
        for k in lo..hi {
            let d = (self.times[k + 1] - self.times[k]) * half;
            w[k - lo] = w[k - lo] + d;
            w[k + 1 - lo] = w[k + 1 - lo] + d;
        }
        w
    }

    /// Product weights of `∫_{r_lo}^{r_hi} g(r) (r - r_lo)^{-α} dr` for piecewise-linear `g`.
    fn outer_weights(&self, lo: usize, hi: usize) -> Vec<T> {
        let mut w = vec![T::zero(); hi - lo + 1];
        for k in lo..hi {
            let (wn, wf) = self.outer.weights(lo, k, k + 1);
            w[k - lo] = w[k - lo] + wn;
            w[k + 1 - lo] = w[k + 1 - lo] + wf;
        }
        w
    }

    /// `∫_{r_lo}^{r_hi} h dl` for scalar series on the kernel grid.
    pub fn integral(&self, h: &[T], l: &[T], lo: usize, hi: usize) -> T {
        let right = self.right_profile(l, lo, hi);
        let outer = self.outer_weights(lo, hi);
        let trap = self.trapezoid(lo, hi);
        let mut singular = T::zero();
        let mut regular = T::zero();
        for k in lo..=hi {
            let r = right[k - lo];
            singular = singular + outer[k - lo] * h[k] * r;
            if k > lo {
                regular = regular + trap[k - lo] * self.inner_integral(h, lo, k) * r;
            }
        }
        let scale = (T::one() - self.alpha).gamma_fn() * self.alpha.gamma_fn();
        -(singular + self.alpha * regular) / scale
    }

    /// Discrete `|h|_{α,1}` over `[r_lo, r_hi]` for a path given by a value accessor.
    pub fn walpha1(&self, h: &Path<T>, lo: usize, hi: usize) -> T {
        let outer = self.outer_weights(lo, hi);
        let trap = self.trapezoid(lo, hi);
        let mut total = T::zero();
        for k in lo..=hi {
            total = total + outer[k - lo] * norm(h.value(k));
            if k > lo {
                let inner = self
                    .inner
                    .backward(|j| distance(h.value(k), h.value(j)), lo, k);
                total = total + trap[k - lo] * inner;
            }
        }
        total
    }
}

/// `∫_s^t h dl` via `-∫_s^t D_{s+}^α h(r) · D_{t-}^{1-α} l_{t-}(r) dr` (phases folded).
///
/// `h` and `l` must be scalar paths on the same grid.
pub fn stieltjes_integral<T: Scalar>(h: &Path<T>, l: &Path<T>, alpha: T, s: T, t: T) -> Result<T> {
    check_small_alpha(alpha)?;
    same_grid(h, l)?;
    if h.dim() != 1 || l.dim() != 1 {
        return Err(Error::Unsupported(
            "stieltjes_integral expects scalar paths; integrate modes separately".into(),
        ));
    }
    if !(s < t) {
        return Err(Error::Domain {
            time: t.to_f64_lossy(),
            start: s.to_f64_lossy(),
            end: h.end().to_f64_lossy(),
        });
    }
    let lo = h.require_index(s)?;
    let hi = h.require_index(t)?;
    let kernels = FracKernels::new(h.times(), alpha);
    let v = kernels.integral(h.raw_values(), l.raw_values(), lo, hi);
    if !v.is_finite() {
        return Err(Error::Divergent("generalized Stieltjes integral is not finite".into()));
    }
    Ok(v)
}

/// Discrete `|h|_{α,1} = ∫_0^T (|h(s)|/s^α + ∫_0^s |h(s)-h(r)|/(s-r)^{α+1} dr) ds`.
pub fn walpha1_seminorm<T: Scalar>(h: &Path<T>, alpha: T) -> Result<T> {
    check_small_alpha(alpha)?;
    if h.len() < 2 {
        return Err(Error::Resolution("|h|_{α,1} needs at least 2 points".into()));
    }
    Ok(FracKernels::new(h.times(), alpha).walpha1(h, 0, h.len() - 1))
}

/// `∫_0^{t_k} |h(t_k)-h(s)| / (t_k-s)^{α+1} ds` for every grid index `k`.
pub fn difference_integrals<T: Scalar>(h: &Path<T>, alpha: T) -> Vec<T> {
    let kernel = PowerKernel::new(h.times(), T::one() + alpha);
    (0..h.len())
        .map(|k| kernel.backward(|j| distance(h.value(k), h.value(j)), 0, k))
        .collect()
}

/// `‖h(t)‖_α = |h(t)| + ∫_0^t |h(t)-h(s)| / (t-s)^{α+1} ds`.
pub fn alpha_norm_at<T: Scalar>(h: &Path<T>, alpha: T, t: T) -> Result<T> {
    check_order(alpha)?;
    let k = h.require_index(t)?;
    let kernel = PowerKernel::new(h.times(), T::one() + alpha);
    let tail = kernel.backward(|j| distance(h.value(k), h.value(j)), 0, k);
    Ok(norm(h.value(k)) + tail)
}

/// `‖h‖_{α,T} = (sup_t |h(t)|² + ∫_0^T (∫_0^t |h(t)-h(s)|/(t-s)^{α+1} ds)² dt)^{1/2}`.
pub fn balpha2_norm<T: Scalar>(h: &Path<T>, alpha: T, horizon: T) -> Result<T> {
    check_order(alpha)?;
    let hi = h.require_index(horizon)?;
    let window = h.slice(0, hi);
    Ok(balpha2_of(&window, &difference_integrals(&window, alpha)))
}

/// `‖h‖_{α,T}` from precomputed difference integrals (trapezoid in time).
pub(crate) fn balpha2_of<T: Scalar>(h: &Path<T>, inner: &[T]) -> T {
    let times = h.times();
    let sup = (0..h.len()).map(|k| norm(h.value(k))).fold(T::zero(), T::max);
    let half = T::lit(0.5);
    let mut integral = T::zero();
    for k in 1..h.len() {
        let dt = times[k] - times[k - 1];
        integral = integral + half * dt * (inner[k - 1] * inner[k - 1] + inner[k] * inner[k]);
    }
    (sup * sup + integral).sqrt()
}

/// `Λ_α` normalisation re-exported for callers that only need fracint.
pub fn lambda_normalisation<T: Scalar>(alpha: T) -> T {
    lambda_constant(alpha)
}

/// Quadrature of `∫_0^r (r-s)^{-a} (t-s)^{-d} ds` with the Beta-function bound
/// `(t-r)^{1-a-d} B(1-a, a+d-1)`. Returns `(integral, bound)`.
pub fn beta_inequality_check(a: f64, d: f64, r: f64, t: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a < 1.0 && d > 0.0 && a + d > 1.0 && r > 0.0 && t > r) {
        return Err(param(format!(
            "need 0 < a < 1, d > 0, a + d > 1 and 0 < r < t (a={a}, d={d}, r={r}, t={t})"
        )));
    }
    // distances u = r - s, geometric near the singular end, kernel u^{-a}
    let gap = t - r;
    let u_min = (gap * 1e-7).min(r * 1e-7);
    let points = 4000;
    let ratio = (r / u_min).powf(1.0 / (points - 1) as f64);
    let mut u = vec![0.0];
    u.extend((0..points).map(|k| u_min * ratio.powi(k)));
    *u.last_mut().unwrap() = r;
    let kernel = PowerKernel::new(&u, a);
    let integral = kernel.forward(|j| (gap + u[j]).powf(-d), 0, u.len() - 1);
    let bound = gap.powf(1.0 - a - d) * (1.0 - a).beta_fn(a + d - 1.0);
    Ok((integral, bound))
}

/// Measured `∫_0^t e^{-ρ(t-r)} (t-r)^{-a} r^{-d} dr / ρ^{a+d-1}` for `a, d ≥ 0`, `a + d < 1`.
pub fn rho_inequality_ratio(a: f64, d: f64, t: f64, rho: f64) -> Result<f64> {
    if !(a >= 0.0 && d >= 0.0 && a + d < 1.0 && t > 0.0 && rho >= 1.0) {
        return Err(param(format!(
            "need a, d ≥ 0, a + d < 1, t > 0 and ρ ≥ 1 (a={a}, d={d}, t={t}, ρ={rho})"
        )));
    }
    let half = 0.5 * t;
    let graded = |len: f64| {
        let u_min = len * 1e-9;
        let n = 3000;
        let q = (len / u_min).powf(1.0 / (n - 1) as f64);
        let mut u = vec![0.0];
        u.extend((0..n).map(|k| u_min * q.powi(k)));
        *u.last_mut().unwrap() = len;
        u
    };
    // [0, t/2] with kernel r^{-d}; [t/2, t] with kernel (t-r)^{-a}, u = t - r
    let near0 = graded(half);
    let k0 = PowerKernel::new(&near0, d);
    let left = k0.forward(
        |j| {
            let r = near0[j];
            (-rho * (t - r)).exp() * (t - r).powf(-a)
        },
        0,
        near0.len() - 1,
    );
    let near_t = graded(half);
    let kt = PowerKernel::new(&near_t, a);
    let right = kt.forward(
        |j| {
            let u = near_t[j];
            (-rho * u).exp() * (t - u).powf(-d)
        },
        0,
        near_t.len() - 1,
    );
    Ok((left + right) / rho.powf(a + d - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, horizon: f64) -> Vec<f64> {
        (0..n).map(|k| horizon * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn left_derivative_of_identity() {
        // D^α t = t^{1-α}/Γ(2-α)
        let h = Path::from_fn(grid(129, 1.0), |t| t).unwrap();
        let d = weyl_left_derivative(&h, 0.3, 0.0, 1.0).unwrap()[0];
        assert!((d - 1.0 / 1.7f64.gamma_fn()).abs() < 1e-12, "{d}");
    }

    #[test]
    fn left_derivative_of_constant() {
        let h = Path::from_fn(grid(33, 2.0), |_| 3.0).unwrap();
        let d = weyl_left_derivative(&h, 0.4, 0.5, 2.0).unwrap()[0];
        let exact = 3.0 / (1.5f64.powf(0.4) * 0.6f64.gamma_fn());
        assert!((d - exact).abs() < 1e-12);
    }

    #[test]
    fn right_derivative_of_identity() {
        // real part: -(c-t)^α / Γ(1+α) with order 1-α
        let alpha = 0.3;
        let l = Path::from_fn(grid(129, 1.0), |t| t).unwrap();
        let d = weyl_right_derivative(&l, 1.0 - alpha, 1.0, 0.25).unwrap()[0];
        let exact = -(0.75f64).powf(alpha) / (1.0 + alpha).gamma_fn();
        assert!((d - exact).abs() < 1e-12, "{d} vs {exact}");
        let flat = Path::from_fn(grid(17, 1.0), |_| -2.0).unwrap();
        assert_eq!(weyl_right_derivative(&flat, 0.6, 1.0, 0.5).unwrap()[0], 0.0);
    }

    #[test]
    fn derivative_domain_errors() {
        let h = Path::from_fn(grid(9, 1.0), |t| t).unwrap();
        assert!(weyl_left_derivative(&h, 0.3, 0.5, 0.5).is_err());
        assert!(weyl_right_derivative(&h, 0.7, 0.5, 0.75).is_err());
    }

    #[test]
    fn integral_of_one_is_increment() {
        let times = grid(2049, 1.0);
        let one = Path::from_fn(times.clone(), |_| 1.0).unwrap();
        let l = Path::from_fn(times, |t| (3.0 * t).sin() + t * t).unwrap();
        let v = stieltjes_integral(&one, &l, 0.3, 0.25, 1.0).unwrap();
        let exact = l.at(2048) - l.at(512);
        assert!((v - exact).abs() < 1e-4, "{v} vs {exact}");
    }

    #[test]
    fn walpha1_of_constant() {
        let c = 1.7;
        let alpha = 0.35;
        let h = Path::from_fn(grid(65, 2.0), |_| c).unwrap();
        let v = walpha1_seminorm(&h, alpha).unwrap();
        let exact = c * 2f64.powf(1.0 - alpha) / (1.0 - alpha);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn alpha_norm_of_identity() {
        let alpha = 0.3;
        let h = Path::from_fn(grid(101, 1.0), |t| t).unwrap();
        let v = alpha_norm_at(&h, alpha, 0.5).unwrap();
        let exact = 0.5 + 0.5f64.powf(1.0 - alpha) / (1.0 - alpha);
        assert!((v - exact).abs() < 1e-12);
        let c = Path::from_fn(grid(11, 1.0), |_| -4.0).unwrap();
        assert!((balpha2_norm(&c, alpha, 1.0).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn exponent_defaults_are_admissible() {
        for &h in &[0.55, 0.7, 0.9] {
            FracExponents::defaults(h).validate(h).unwrap();
        }
        let mut e = FracExponents::defaults(0.7);
        e.alpha = 0.2;
        let msg = e.validate(0.7).unwrap_err().to_string();
        assert!(msg.contains("alpha must lie in (1-H, 1/2)"), "{msg}");
    }

    #[test]
    fn beta_bound_holds() {
        use crate::quadrature::gauss_legendre;
        let (a, d, r, t) = (0.4, 0.8, 0.6, 1.0);
        let (v, b) = beta_inequality_check(a, d, r, t).unwrap();
        // u = w^{1/(1-a)} removes the endpoint singularity
        let top = r.powf(1.0 - a);
        let oracle = gauss_legendre(
            |w| (t - r + w.powf(1.0 / (1.0 - a))).powf(-d) / (1.0 - a),
            0.0,
            top,
            64,
        );
        assert!((v - oracle).abs() < 1e-6 * oracle, "{v} {oracle}");
        assert!(v <= b * (1.0 + 1e-6));
    }

    #[test]
    fn rho_ratio_is_bounded() {
        let small = rho_inequality_ratio(0.3, 0.2, 1.0, 1.0).unwrap();
        let large = rho_inequality_ratio(0.3, 0.2, 1.0, 400.0).unwrap();
        assert!(small.is_finite() && large.is_finite());
        assert!(large < 10.0 * small.max(1.0));
    }
}
