use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::path::Path;
use crate::quadrature::{DistancePower, PowerKernel};
use crate::scalar::{distance, Scalar};

/// `Γ(1-α)Γ(α) = π / sin(πα)`, the normalisation turning `‖l‖_{α}` into `Λ_α`.
pub fn lambda_constant<T: Scalar>(alpha: T) -> T {
    T::PI() / (T::PI() * alpha).sin()
}

/// Midpoint of the admissible interval `(1-H, 1/2)`.
pub fn default_alpha<T: Scalar>(hurst: T) -> T {
    (T::one() - hurst + T::lit(0.5)) / T::lit(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport<T> {
    /// `K_ϖ`: discrete ϖ-Hölder seminorm.
    pub holder_seminorm: T,
    /// `‖l‖_{α,s,t}`.
    pub lambda_norm: T,
    /// `Λ_α^{s,t}(l) = ‖l‖_{α,s,t} / (Γ(1-α)Γ(α))`.
    pub lambda_alpha: T,
    pub alpha: T,
    pub holder_exponent: T,
    pub points: usize,
    pub max_step: T,
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::lit(0.5) {
        Ok(())
    } else {
        Err(param(format!("alpha must lie in (0, 1/2), got {alpha}")))
    }
}

fn span_indices<T: Scalar>(path: &Path<T>, s: T, t: T) -> Result<(usize, usize)> {
    if !(s < t) {
        return Err(Error::Domain {
            time: t.to_f64_lossy(),
            start: s.to_f64_lossy(),
            end: path.end().to_f64_lossy(),
        });
    }
    Ok((path.require_index(s)?, path.require_index(t)?))
}

/// Running maximum, for each grid index `k ∈ [lo, hi]`, of the pair functional
/// `|l(t)-l(s)|/(t-s)^{1-α} + ∫_s^t |l(ζ)-l(s)|/(ζ-s)^{2-α} dζ` over grid pairs
/// `lo ≤ s < t ≤ t_k`. Entry `0` (k = lo) is zero.
///
/// Works for any `α ∈ (0, 1)`.
pub(crate) fn pair_profile<T: Scalar>(path: &Path<T>, alpha: T, lo: usize, hi: usize) -> Vec<T> {
    let times = path.times();
    let kernel = PowerKernel::new(times, T::lit(2.0) - alpha);
    let quotient = DistancePower::new(times, T::one() - alpha);
    let n = hi - lo + 1;
    let mut best = vec![T::zero(); n];
    let mut gap = vec![T::zero(); n];
    let scalar = path.dim() == 1;
    let vals = path.raw_values();
    for i in lo..hi {
        if scalar {
            let base = vals[i];
            for k in i..=hi {
                gap[k - lo] = (vals[k] - base).abs();
            }
        } else {
            let base = path.value(i);
            for k in i..=hi {
                gap[k - lo] = distance(path.value(k), base);
            }
        }
        if let (Some((wn, wf)), Some(q)) = (kernel.uniform_tables(), quotient.uniform_table()) {
            let gap = &gap[i - lo..];
            let best = &mut best[i - lo..];
            let mut integral = T::zero();
            for m in 1..gap.len() {
                integral = integral + wn[m] * gap[m - 1] + wf[m] * gap[m];
                let a = gap[m] * q[m] + integral;
                if a > best[m] {
                    best[m] = a;
                }
            }
            continue;
        }
        let mut integral = T::zero();
        for k in (i + 1)..=hi {
            let (wn, wf) = kernel.weights(i, k - 1, k);
            integral = integral + wn * gap[k - 1 - lo] + wf * gap[k - lo];
            let a = gap[k - lo] * quotient.get(i, k) + integral;
            if a > best[k - lo] {
                best[k - lo] = a;
            }
        }
    }
    for k in 1..n {
        if best[k - 1] > best[k] {
            best[k] = best[k - 1];
        }
    }
    best
}

/// Discrete `sup_{s<t} |h(t)-h(s)| / (t-s)^ϖ` over grid pairs in `[lo, hi]`.
pub(crate) fn holder_between<T: Scalar>(path: &Path<T>, exponent: T, lo: usize, hi: usize) -> T {
    let dp = DistancePower::new(path.times(), exponent);
    let mut best = T::zero();
    for i in lo..hi {
        let base = path.value(i);
        for k in (i + 1)..=hi {
            let q = distance(path.value(k), base) * dp.get(i, k);
            if q > best {
                best = q;
            }
        }
    }
    best
}

/// Discrete ϖ-Hölder seminorm over all grid pairs.
pub fn holder_seminorm<T: Scalar>(path: &Path<T>, exponent: T) -> Result<T> {
    if !(exponent > T::zero() && exponent <= T::one()) {
        return Err(param(format!("Hölder exponent must lie in (0, 1], got {exponent}")));
    }
    if path.len() < 2 {
        return Err(Error::Resolution("Hölder seminorm needs at least 2 points".into()));
    }
    Ok(holder_between(path, exponent, 0, path.len() - 1))
}

fn max_step<T: Scalar>(times: &[T]) -> T {
    times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(T::zero(), |a, b| a.max(b))
}

/// `‖l‖_{α,s,t}`, `Λ_α^{s,t}(l)` and the `(1-α)`-Hölder seminorm on `[s, t]`.
pub fn lambda_alpha_norm<T: Scalar>(path: &Path<T>, alpha: T, s: T, t: T) -> Result<NormReport<T>> {
    norm_report(path, alpha, T::one() - alpha, s, t)
}

/// As [`lambda_alpha_norm`] with an explicit Hölder exponent for the seminorm field.
pub fn norm_report<T: Scalar>(
    path: &Path<T>,
    alpha: T,
    holder_exponent: T,
    s: T,
    t: T,
) -> Result<NormReport<T>> {
    check_alpha(alpha)?;
    if !(holder_exponent > T::zero() && holder_exponent <= T::one()) {
        return Err(param(format!(
            "Hölder exponent must lie in (0, 1], got {holder_exponent}"
        )));
    }
    let (lo, hi) = span_indices(path, s, t)?;
    let lambda_norm = *pair_profile(path, alpha, lo, hi).last().expect("non-empty span");
    if !lambda_norm.is_finite() {
        return Err(Error::Divergent(format!("‖l‖_α on [{s}, {t}] is not finite")));
    }
    Ok(NormReport {
        holder_seminorm: holder_between(path, holder_exponent, lo, hi),
        lambda_norm,
        lambda_alpha: lambda_norm / lambda_constant(alpha),
        alpha,
        holder_exponent,
        points: hi - lo + 1,
        max_step: max_step(&path.times()[lo..=hi]),
    })
}

/// `Λ_α^{0,t_k}(l)` for every grid index `k` (non-decreasing by construction).
pub fn lambda_profile<T: Scalar>(path: &Path<T>, alpha: T) -> Result<Vec<T>> {
    check_alpha(alpha)?;
    let c = lambda_constant(alpha);
    Ok(pair_profile(path, alpha, 0, path.len() - 1)
        .into_iter()
        .map(|v| v / c)
        .collect())
}

/// `Λ_{α,B}^{0,t_k} = Σ_i Λ_α^{0,t_k}(mode i)` for every grid index; the modes of
/// `qpath` already carry their `√λ_i` factors.
pub fn qfbm_lambda_profile<T: Scalar>(qpath: &Path<T>, alpha: T) -> Result<Vec<T>> {
    check_alpha(alpha)?;
    let mut total = vec![T::zero(); qpath.len()];
    for mode in qpath.components() {
        for (acc, v) in total.iter_mut().zip(lambda_profile(&mode, alpha)?) {
            *acc = *acc + v;
        }
    }
    Ok(total)
}

/// `Λ_{α,B}^{0,t}` for a Hilbert-valued path.
pub fn qfbm_lambda<T: Scalar>(qpath: &Path<T>, alpha: T, t: T) -> Result<T> {
    let k = qpath.require_index(t)?;
    check_alpha(alpha)?;
    let c = lambda_constant(alpha);
    let mut total = T::zero();
    for mode in qpath.components() {
        total = total + *pair_profile(&mode, alpha, 0, k).last().expect("non-empty") / c;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn linear_path_closed_form() {
        // sup_{s<t} (1 + 1/α)(t-s)^α on [0, 1] with α = 1/4
        let p = Path::from_fn(grid(257), |t| t).unwrap();
        let r = lambda_alpha_norm(&p, 0.25, 0.0, 1.0).unwrap();
        assert!((r.lambda_norm - 5.0).abs() < 1e-10, "{}", r.lambda_norm);
        assert!((r.lambda_alpha - 5.0 / lambda_constant(0.25)).abs() < 1e-10);
        assert!((r.holder_seminorm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadratic_path_against_closed_form() {
        // l(ζ) = ζ²: for a pair (s, 1) with d = 1 - s the functional is
        // d^α (d + 2s) + d^{α+1}/(α+1) + 2 s d^α / α, increasing in t.
        let alpha = 0.3;
        let times = grid(2049);
        let p = Path::from_fn(times.clone(), |t| t * t).unwrap();
        let r = lambda_alpha_norm(&p, alpha, 0.0, 1.0).unwrap();
        let oracle = times[..2048]
            .iter()
            .map(|&s| {
                let d = 1.0 - s;
                d.powf(alpha) * (d + 2.0 * s)
                    + d.powf(alpha + 1.0) / (alpha + 1.0)
                    + 2.0 * s * d.powf(alpha) / alpha
            })
            .fold(0.0, f64::max);
        // first-cell interpolation error is O(h^{1+α})
        assert!((r.lambda_norm - oracle).abs() < 1e-4 * oracle, "{} vs {}", r.lambda_norm, oracle);
    }

    #[test]
    fn constant_path_has_zero_norms() {
        let p = Path::from_fn(grid(33), |_| 2.5).unwrap();
        let r = lambda_alpha_norm(&p, 0.2, 0.0, 1.0).unwrap();
        assert_eq!(r.lambda_norm, 0.0);
        assert_eq!(holder_seminorm(&p, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_alpha_and_single_point() {
        let p = Path::from_fn(grid(9), |t| t).unwrap();
        assert!(lambda_alpha_norm(&p, 0.5, 0.0, 1.0).is_err());
        let single = Path::scalar(vec![0.0], vec![1.0]).unwrap();
        assert!(holder_seminorm(&single, 0.5).is_err());
    }

    #[test]
    fn profile_ends_at_full_norm() {
        let p = Path::from_fn(grid(65), |t| (7.0 * t).sin()).unwrap();
        let prof = lambda_profile(&p, 0.3).unwrap();
        let full = lambda_alpha_norm(&p, 0.3, 0.0, 1.0).unwrap().lambda_alpha;
        assert!((prof[64] - full).abs() < 1e-14);
        assert!(prof.windows(2).all(|w| w[0] <= w[1]));
    }
}
