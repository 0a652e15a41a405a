//! Product quadrature for power-law kernels.
//!
//! Integrals of the form `∫ g(ζ) |ζ - anchor|^{-γ} dζ` are evaluated cell by
//! cell with `g` replaced by its piecewise-linear interpolant and the kernel
//! integrated exactly. The rule is exact for piecewise-linear `g`, and every
//! weight is non-negative. When `γ ≥ 1` the interpolant must vanish at the
//! anchor (true for the difference quotients this crate feeds in).

use crate::scalar::Scalar;

/// `∫_{u0}^{u1} u^{q-1} du`, evaluated without cancellation when `u1 - u0 ≪ u0`.
fn power_increment(u0: f64, u1: f64, q: f64) -> f64 {
    if u0 == 0.0 {
        debug_assert!(q > 0.0);
        return u1.powf(q) / q;
    }
    let rel = (u1 - u0) / u0;
    if q.abs() < 1e-12 {
        return rel.ln_1p();
    }
    u0.powf(q) * (q * rel.ln_1p()).exp_m1() / q
}

/// Weights `(w_near, w_far)` with
/// `∫_{u0}^{u1} [g_near + (g_far - g_near)(u - u0)/(u1 - u0)] u^{-γ} du = w_near g_near + w_far g_far`.
///
/// At `u0 = 0` with `γ ≥ 1` the near weight is undefined; zero is returned and
/// the caller must guarantee `g_near = 0`.
pub fn cell_weights(u0: f64, u1: f64, gamma: f64) -> (f64, f64) {
    let h = u1 - u0;
    debug_assert!(h > 0.0 && u0 >= 0.0);
    if u0 == 0.0 && gamma >= 1.0 {
        return (0.0, h.powf(1.0 - gamma) / (2.0 - gamma));
    }
    let m0 = power_increment(u0, u1, 1.0 - gamma);
    let m1 = power_increment(u0, u1, 2.0 - gamma);
    let w_far = (m1 - u0 * m0) / h;
    let w_near = m0 - w_far;
    (w_near, w_far)
}

/// Cell weights for the kernel `|ζ - anchor|^{-γ}` on a fixed time grid.
#[derive(Debug, Clone)]
pub struct PowerKernel<T> {
    gamma: T,
    layout: Layout<T>,
}

#[derive(Debug, Clone)]
enum Layout<T> {
    /// `near[m]`, `far[m]`: weights of the cell spanning distances `(m-1)Δ..mΔ`.
    Uniform { near: Vec<T>, far: Vec<T> },
    General { times: Vec<T> },
}

impl<T: Scalar> PowerKernel<T> {
    pub fn new(times: &[T], gamma: T) -> Self {
        let layout = match crate::path::uniform_step(times) {
            Some(step) => {
                let g = gamma.to_f64_lossy();
                let scale = step.to_f64_lossy().powf(1.0 - g);
                let n = times.len();
                let mut near = vec![T::zero(); n];
                let mut far = vec![T::zero(); n];
                for m in 1..n {
                    let (a, b) = cell_weights((m - 1) as f64, m as f64, g);
                    near[m] = T::lit(a * scale);
                    far[m] = T::lit(b * scale);
                }
                Layout::Uniform { near, far }
            }
            None => Layout::General {
                times: times.to_vec(),
            },
        };
        Self { gamma, layout }
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// `(near, far)` weight tables indexed by anchor offset, on uniform grids.
    pub fn uniform_tables(&self) -> Option<(&[T], &[T])> {
        match &self.layout {
            Layout::Uniform { near, far } => Some((near, far)),
            Layout::General { .. } => None,
        }
    }

    /// Weights for the cell between grid nodes `near` and `far`, where `near`
    /// is the node closer to `anchor` (possibly `anchor` itself).
    #[inline]
    pub fn weights(&self, anchor: usize, near: usize, far: usize) -> (T, T) {
        match &self.layout {
            Layout::Uniform { near: wn, far: wf } => {
                let m = far.abs_diff(anchor);
                (wn[m], wf[m])
            }
            Layout::General { times } => {
                let u0 = (times[near] - times[anchor]).abs().to_f64_lossy();
                let u1 = (times[far] - times[anchor]).abs().to_f64_lossy();
                let (a, b) = cell_weights(u0, u1, self.gamma.to_f64_lossy());
                (T::lit(a), T::lit(b))
            }
        }
    }

    /// `∫_{t_anchor}^{t_end} g(ζ) (ζ - t_anchor)^{-γ} dζ` for nodal values `g[anchor..=end]`.
    pub fn forward(&self, g: impl Fn(usize) -> T, anchor: usize, end: usize) -> T {
        let mut acc = T::zero();
        let mut prev = g(anchor);
        for j in anchor..end {
            let next = g(j + 1);
            let (wn, wf) = self.weights(anchor, j, j + 1);
            acc = acc + wn * prev + wf * next;
            prev = next;
        }
        acc
    }

    /// `∫_{t_start}^{t_anchor} g(ζ) (t_anchor - ζ)^{-γ} dζ` for nodal values `g[start..=anchor]`.
    pub fn backward(&self, g: impl Fn(usize) -> T, start: usize, anchor: usize) -> T {
        let mut acc = T::zero();
        let mut prev = g(anchor);
        for j in (start..anchor).rev() {
            let next = g(j);
            let (wn, wf) = self.weights(anchor, j + 1, j);
            acc = acc + wn * prev + wf * next;
            prev = next;
        }
        acc
    }
}

/// Table of `(t_k - t_i)^{-p}` for grid index pairs, cached by index offset on uniform grids.
#[derive(Debug, Clone)]
pub struct DistancePower<T> {
    exponent: T,
    uniform: Option<Vec<T>>,
    times: Vec<T>,
}

impl<T: Scalar> DistancePower<T> {
    pub fn new(times: &[T], exponent: T) -> Self {
        let uniform = crate::path::uniform_step(times).map(|step| {
            (0..times.len())
                .map(|m| {
                    if m == 0 {
                        T::infinity()
                    } else {
                        (step * T::from_usize_lossy(m)).powf(-exponent)
                    }
                })
                .collect()
        });
        Self {
            exponent,
            uniform,
            times: times.to_vec(),
        }
    }

    /// `(mΔ)^{-p}` indexed by offset `m`, on uniform grids.
    pub fn uniform_table(&self) -> Option<&[T]> {
        self.uniform.as_deref()
    }

    /// `|t_k - t_i|^{-p}`.
    #[inline]
    pub fn get(&self, i: usize, k: usize) -> T {
        match &self.uniform {
            Some(table) => table[k.abs_diff(i)],
            None => (self.times[k] - self.times[i]).abs().powf(-self.exponent),
        }
    }
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` panels of 8 nodes.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const W: [f64; 4] = [
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut s = 0.0;
        for (x, w) in X.iter().zip(W) {
            s += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += s * half;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_weights_integrate_linear_exactly() {
        // ∫_1^2 u · u^{-1.3} du = [u^{0.7}/0.7]_1^2
        let (wn, wf) = cell_weights(1.0, 2.0, 1.3);
        let exact = (2f64.powf(0.7) - 1.0) / 0.7;
        assert!((wn * 1.0 + wf * 2.0 - exact).abs() < 1e-14);
        // constant integrand
        let exact0 = (2f64.powf(-0.3) - 1.0) / -0.3;
        assert!((wn + wf - exact0).abs() < 1e-14);
    }

    #[test]
    fn cell_weights_are_stable_far_from_anchor() {
        let (wn, wf) = cell_weights(1e4, 1e4 + 1.0, 1.7);
        let approx = 1e4f64.powf(-1.7);
        assert!(wn > 0.0 && wf > 0.0);
        assert!(((wn + wf) / approx - 1.0).abs() < 1e-3);
        assert!((wn / wf - 1.0).abs() < 1e-3);
    }

    #[test]
    fn singular_cell_uses_vanishing_interpolant() {
        // ∫_0^h (u/h) u^{-1.25} du = h^{-0.25}/0.75
        let h = 0.01;
        let (wn, wf) = cell_weights(0.0, h, 1.25);
        assert_eq!(wn, 0.0);
        assert!((wf - h.powf(-0.25) / 0.75).abs() < 1e-12);
    }

    #[test]
    fn uniform_and_general_layouts_agree() {
        let uniform: Vec<f64> = (0..9).map(|k| k as f64 * 0.125).collect();
        let mut perturbed = uniform.clone();
        perturbed[4] += 1e-6;
        let ku = PowerKernel::new(&uniform, 1.35);
        let kg = PowerKernel::new(&perturbed, 1.35);
        let g = |j: usize| (j as f64 - 2.0).abs();
        let a = ku.forward(g, 2, 8);
        let b = kg.forward(g, 2, 8);
        assert!((a - b).abs() < 1e-4);
        let c = ku.backward(|j| 8.0 - j as f64, 0, 8);
        // ∫_0^1 8(1-ζ)·(1-ζ)^{-1.35} dζ = 8/0.65
        assert!((c - 8.0 / 0.65).abs() < 1e-12);
    }

    #[test]
    fn gauss_legendre_polynomial() {
        let v = gauss_legendre(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, 3);
        assert!((v - (2f64.powi(8) / 8.0 - 8.0)).abs() < 1e-12);
    }
}
