//! Stopping-time localisation and moving-average mollification of fBm paths.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fbm::{holder_seminorm, pair_profile, qfbm_lambda, qfbm_lambda_profile};
use crate::path::Path;
use crate::scalar::Scalar;
use crate::stats::linear_fit;

/// `τ_N = inf{t : Λ_{α,B}^{0,t} ≥ N} ∧ T`, snapped to the grid.
pub fn stopping_time<T: Scalar>(qpath: &Path<T>, alpha: T, level: T, horizon: T) -> Result<T> {
    Ok(stopping_times(qpath, alpha, &[level], horizon)?[0])
}

/// [`stopping_time`] for several levels from one Λ profile.
pub fn stopping_times<T: Scalar>(qpath: &Path<T>, alpha: T, levels: &[T], horizon: T) -> Result<Vec<T>> {
    if let Some(level) = levels.iter().find(|l| !(**l > T::zero())) {
        return Err(param(format!("stopping level N must be positive, got {level}")));
    }
    let hi = qpath.require_index(horizon)?;
    let profile = qfbm_lambda_profile(qpath, alpha)?;
    let times = qpath.times();
    Ok(levels
        .iter()
        .map(|&level| {
            (1..=hi)
                .find(|&k| profile[k] >= level)
                .map_or(times[hi], |k| times[k])
        })
        .collect())
}

/// `t ↦ path(t ∧ τ)`.
pub fn stop_path<T: Scalar>(path: &Path<T>, tau: T) -> Result<Path<T>> {
    let k = path.require_index(tau)?;
    let dim = path.dim();
    let mut values = path.raw_values().to_vec();
    let frozen = path.value(k).to_vec();
    for row in values[(k + 1) * dim..].chunks_exact_mut(dim) {
        row.copy_from_slice(&frozen);
    }
    path.with_values(values)
}

fn window<T: Scalar>(path: &Path<T>, n: usize) -> Result<T> {
    if n == 0 {
        return Err(param("mollifier index n must be at least 1"));
    }
    let w = T::one() / T::from_usize_lossy(n);
    let times = path.times();
    let max_step = times
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(T::zero(), T::max);
    if w < T::lit(2.0) * max_step * (T::one() - T::lit(1e-9)) {
        return Err(Error::Resolution(format!(
            "mollifier window 1/n = {w} is below two grid steps ({})",
            T::lit(2.0) * max_step
        )));
    }
    Ok(w)
}

/// Running integral of the piecewise-linear interpolant, extended to the left by `path(0)`.
struct Primitive<'a, T> {
    path: &'a Path<T>,
    cumulative: Vec<T>,
}

impl<'a, T: Scalar> Primitive<'a, T> {
    fn new(path: &'a Path<T>) -> Self {
        let dim = path.dim();
        let times = path.times();
        let half = T::lit(0.5);
        let mut cumulative = vec![T::zero(); path.len() * dim];
        for k in 1..path.len() {
            let dt = times[k] - times[k - 1];
            for c in 0..dim {
                let inc = half * dt * (path.value(k - 1)[c] + path.value(k)[c]);
                cumulative[k * dim + c] = cumulative[(k - 1) * dim + c] + inc;
            }
        }
        Self { path, cumulative }
    }

    /// `∫_{t_0}^{x} path` for component `c`.
    fn at(&self, x: T, c: usize) -> T {
        let dim = self.path.dim();
        let times = self.path.times();
        let t0 = times[0];
        if x <= t0 {
            return (x - t0) * self.path.value(0)[c];
        }
        let j = match times.binary_search_by(|t| t.partial_cmp(&x).unwrap()) {
            Ok(j) => return self.cumulative[j * dim + c],
            Err(j) => j - 1,
        };
        let (a, b) = (times[j], times[j + 1]);
        let (va, vb) = (self.path.value(j)[c], self.path.value(j + 1)[c]);
        let u = x - a;
        let slope = (vb - va) / (b - a);
        self.cumulative[j * dim + c] + u * (va + T::lit(0.5) * slope * u)
    }
}

/// `path^{(n)}(t) = n ∫_{t-1/n}^t path(s) ds` with `path(s) = path(0)` for `s < 0`,
/// integrating the piecewise-linear interpolant exactly.
pub fn mollify_path<T: Scalar>(path: &Path<T>, n: usize) -> Result<Path<T>> {
    let w = window(path, n)?;
    let nn = T::from_usize_lossy(n);
    let prim = Primitive::new(path);
    let dim = path.dim();
    let times = path.times();
    let mut values = Vec::with_capacity(path.len() * dim);
    for &t in times {
        for c in 0..dim {
            values.push(nn * (prim.at(t, c) - prim.at(t - w, c)));
        }
    }
    path.with_values(values)
}

/// `d/dt path^{(n)}(t) = n (path(t) - path((t - 1/n) ∨ 0))`, per component.
pub fn mollified_derivative<T: Scalar>(path: &Path<T>, n: usize, t: T) -> Result<Vec<T>> {
    let w = window(path, n)?;
    let k = path.require_index(t)?;
    let nn = T::from_usize_lossy(n);
    let back = path.interpolate((t - w).max(path.start()));
    Ok(path
        .value(k)
        .iter()
        .zip(back)
        .map(|(&a, b)| nn * (a - b))
        .collect())
}

/// Log-log regression of `‖β - β^{(n)}‖_{α,0,T}` against `ε = 1/n`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEstimate<T> {
    /// Fitted exponent: `error ≈ e^{intercept} ε^{slope}`.
    pub slope: T,
    pub intercept: T,
    pub ns: Vec<usize>,
    pub errors: Vec<T>,
    /// `ϖ + α - 1`, the rate the Hölder bound predicts.
    pub predicted: T,
    pub holder_seminorm: T,
}

pub fn mollify_error_rate<T: Scalar>(
    path: &Path<T>,
    alpha: T,
    holder: T,
    ns: &[usize],
) -> Result<RateEstimate<T>> {
    if !(alpha > T::zero() && alpha < T::lit(0.5)) {
        return Err(param(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    if ns.len() < 3 {
        return Err(param(format!(
            "mollification rate fit needs at least 3 values of n, got {}",
            ns.len()
        )));
    }
    if !(holder > T::one() - alpha && holder <= T::one()) {
        return Err(param(format!(
            "holder exponent must lie in (1-alpha, 1] = ({}, 1], got {holder}",
            T::one() - alpha
        )));
    }
    let k_holder = holder_seminorm(path, holder)?;
    if !k_holder.is_finite() {
        return Err(Error::Divergent("path has infinite Hölder seminorm".into()));
    }
    let mut errors = Vec::with_capacity(ns.len());
    for &n in ns {
        let diff = path.sub(&mollify_path(path, n)?)?;
        let hi = diff.len() - 1;
        errors.push(*pair_profile(&diff, alpha, 0, hi).last().expect("non-empty path"));
    }
    let predicted = holder + alpha - T::one();
    if errors.iter().all(|&e| e == T::zero()) {
        return Ok(RateEstimate {
            slope: T::infinity(),
            intercept: T::neg_infinity(),
            ns: ns.to_vec(),
            errors,
            predicted,
            holder_seminorm: k_holder,
        });
    }
    let xs: Vec<T> = ns
        .iter()
        .map(|&n| (T::one() / T::from_usize_lossy(n)).ln())
        .collect();
    let ys: Vec<T> = errors.iter().map(|e| e.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(RateEstimate {
        slope: fit.slope,
        intercept: fit.intercept,
        ns: ns.to_vec(),
        errors,
        predicted,
        holder_seminorm: k_holder,
    })
}

/// Mollified, stopped copy of a Q-fBm path: `B^{H,N,n}` together with `τ_N`.
pub fn stopped_mollified<T: Scalar>(
    qpath: &Path<T>,
    alpha: T,
    level: T,
    n: usize,
) -> Result<(T, Path<T>)> {
    let tau = stopping_time(qpath, alpha, level, qpath.end())?;
    let stopped = stop_path(qpath, tau)?;
    Ok((tau, mollify_path(&stopped, n)?))
}

/// `Λ_{α,B^{H,N,n}}^{0,T} / N` for one sample.
pub fn lambda_bound_ratio<T: Scalar>(qpath: &Path<T>, alpha: T, level: T, n: usize) -> Result<T> {
    let (_, mollified) = stopped_mollified(qpath, alpha, level, n)?;
    Ok(qfbm_lambda(&mollified, alpha, mollified.end())? / level)
}

/// Worst ratio over the grid of the mollified-drift bound
/// `Σ_i |d/ds β_i^{(n)}(s)| ≤ n^α Σ_i ‖β_i‖_{α,0,s}`, modes already weighted.
///
/// Returns `(max LHS / RHS, max LHS / (n^α Σ_i Λ_α^{0,s}(β_i)))`.
pub fn drift_bound_ratio<T: Scalar>(qpath: &Path<T>, alpha: T, n: usize) -> Result<(T, T)> {
    let w = window(qpath, n)?;
    let nn = T::from_usize_lossy(n);
    let lambda = qfbm_lambda_profile(qpath, alpha)?;
    let c = crate::fbm::lambda_constant(alpha);
    let scale = nn.powf(alpha);
    let mut worst = T::zero();
    let mut worst_lambda = T::zero();
    for (k, &s) in qpath.times().iter().enumerate().skip(1) {
        let back = qpath.interpolate((s - w).max(qpath.start()));
        let lhs = qpath
            .value(k)
            .iter()
            .zip(&back)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b).abs())
            * nn;
        let rhs_lambda = scale * lambda[k];
        if rhs_lambda > T::zero() {
            worst = worst.max(lhs / (rhs_lambda * c));
            worst_lambda = worst_lambda.max(lhs / rhs_lambda);
        }
    }
    Ok((worst, worst_lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{sample_fbm_1d, QfbmSpec};
    use crate::path::Grid;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn constant_and_linear_windows() {
        let c = Path::from_fn(grid(101), |_| 2.5).unwrap();
        let m = mollify_path(&c, 10).unwrap();
        assert!(m.raw_values().iter().all(|&v| (v - 2.5).abs() < 1e-13));
        let l = Path::from_fn(grid(101), |t| 3.0 * t).unwrap();
        let m = mollify_path(&l, 10).unwrap();
        for k in 10..101 {
            let t = l.times()[k];
            assert!((m.at(k) - 3.0 * (t - 0.05)).abs() < 1e-12);
        }
        let d = mollified_derivative(&l, 10, 0.5).unwrap()[0];
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn window_must_cover_two_steps() {
        let l = Path::from_fn(grid(11), |t| t).unwrap();
        assert!(matches!(mollify_path(&l, 6), Err(Error::Resolution(_))));
        assert!(mollify_path(&l, 5).is_ok());
    }

    #[test]
    fn stopping_behaviour() {
        let spec = QfbmSpec::new(0.75, 3.0, 3).unwrap();
        let g = Grid::uniform(1.0, 257).unwrap();
        let q = crate::fbm::sample_qfbm(&spec, &g, 5).unwrap();
        let total = qfbm_lambda(&q, 0.3, 1.0).unwrap();
        assert_eq!(stopping_time(&q, 0.3, total * 2.0, 1.0).unwrap(), 1.0);
        assert_eq!(stopping_time(&q, 0.3, 1e-12, 1.0).unwrap(), g.times()[1]);
        let a = stopping_time(&q, 0.3, total * 0.3, 1.0).unwrap();
        let b = stopping_time(&q, 0.3, total * 0.6, 1.0).unwrap();
        assert!(a <= b);
        let s = stop_path(&q, a).unwrap();
        let k = s.index_of(a).unwrap();
        assert!((k..s.len()).all(|j| s.value(j) == q.value(k)));
        assert_eq!(s.value(k / 2), q.value(k / 2));
    }

    #[test]
    fn constant_path_has_zero_errors() {
        let c = Path::from_fn(grid(257), |_| 1.0).unwrap();
        let r = mollify_error_rate(&c, 0.35, 0.7, &[8, 16, 32]).unwrap();
        assert!(r.errors.iter().all(|&e| e.abs() < 1e-12));
        assert!(mollify_error_rate(&c, 0.35, 0.7, &[8, 16]).is_err());
    }

    #[test]
    fn mollified_fbm_converges_in_sup() {
        let g = Grid::uniform(1.0, 1025).unwrap();
        let b = sample_fbm_1d(0.8, &g, 3).unwrap();
        let d8 = b.sup_distance(&mollify_path(&b, 8).unwrap()).unwrap();
        let d256 = b.sup_distance(&mollify_path(&b, 256).unwrap()).unwrap();
        assert!(d256 < d8);
    }

    #[test]
    fn drift_bound_holds_on_sample() {
        let spec = QfbmSpec::new(0.8, 3.0, 2).unwrap();
        let g = Grid::uniform(1.0, 513).unwrap();
        let q = crate::fbm::sample_qfbm(&spec, &g, 11).unwrap();
        let (ratio, _) = drift_bound_ratio(&q, 0.35, 16).unwrap();
        assert!(ratio <= 1.0 + 1e-12, "{ratio}");
    }
}
