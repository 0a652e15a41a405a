//! Galerkin mild-solution solver for `du = (Au + f(u))dt + σ(u)dW + g(u)dB^H`.
//!
//! State vectors are coefficients in the eigenbasis of `A`. `σ` and `g` act
//! diagonally: Wiener mode `k` and fBm mode `i` drive basis vectors `e_k`, `e_i`.
//! Time stepping is exponential Euler with left-point (Itô / Young) noise sums.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fbm::{qfbm_lambda, QfbmSampler, QfbmSpec};
use crate::fracint::{stieltjes_integral, walpha1_seminorm, FracExponents};
use crate::mollify::{stop_path, stopping_time};
use crate::path::{same_grid, Grid, Path};
use crate::quadrature::PowerKernel;
use crate::rng::{substream, Domain};
use crate::scalar::{distance, norm, Scalar};
use crate::semigroup::SpectralOperator;

/// Componentwise map `u_k ↦ a + b sin(u_k) - c u_k`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Deserialize<'de> + Default"))]
pub struct SineAffine<T> {
    #[serde(default)]
    pub constant: T,
    #[serde(default)]
    pub sine: T,
    #[serde(default)]
    pub linear: T,
}

impl<T: Scalar> SineAffine<T> {
    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    pub fn constant(c: T) -> Self {
        Self {
            constant: c,
            sine: T::zero(),
            linear: T::zero(),
        }
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        self.constant + self.sine * x.sin() - self.linear * x
    }

    /// Lipschitz constant of the scalar map.
    pub fn lipschitz(&self) -> T {
        self.sine.abs() + self.linear.abs()
    }

    pub fn is_zero(&self) -> bool {
        self.constant == T::zero() && self.sine == T::zero() && self.linear == T::zero()
    }

    pub fn is_constant(&self) -> bool {
        self.sine == T::zero() && self.linear == T::zero()
    }
}

/// Declared structural constants of `(f, σ, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConstants {
    pub l_f: f64,
    pub l_sigma: f64,
    pub l_g: f64,
    pub l_g_prime: f64,
    pub c1: f64,
    pub c2: f64,
}

/// `f`, `σ`, `g`, each a componentwise [`SineAffine`] map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Deserialize<'de> + Default"))]
pub struct CoefficientSet<T> {
    pub f: SineAffine<T>,
    pub sigma: SineAffine<T>,
    pub g: SineAffine<T>,
    #[serde(default)]
    pub constants: Option<CoefficientConstants>,
}

impl<T: Scalar> CoefficientSet<T> {
    pub fn new(f: SineAffine<T>, sigma: SineAffine<T>, g: SineAffine<T>) -> Self {
        Self {
            f,
            sigma,
            g,
            constants: None,
        }
    }

    pub fn zero() -> Self {
        Self::new(SineAffine::zero(), SineAffine::zero(), SineAffine::zero())
    }

    pub fn drift(&self, u: &[T], out: &mut [T]) {
        for (o, &x) in out.iter_mut().zip(u) {
            *o = self.f.eval(x);
        }
    }

    pub fn diffusion(&self, u: &[T], out: &mut [T]) {
        for (o, &x) in out.iter_mut().zip(u) {
            *o = self.sigma.eval(x);
        }
    }

    pub fn fbm_coefficient(&self, u: &[T], out: &mut [T]) {
        for (o, &x) in out.iter_mut().zip(u) {
            *o = self.g.eval(x);
        }
    }

    /// Constants implied by the parametric form.
    pub fn derived_constants(&self) -> CoefficientConstants {
        let lg = self.g.lipschitz().to_f64_lossy();
        let g0 = self.g.constant.abs().to_f64_lossy();
        // g'' is bounded by |sine|, which also bounds the second-order term
        let curvature = self.g.sine.abs().to_f64_lossy();
        CoefficientConstants {
            l_f: self.f.lipschitz().to_f64_lossy(),
            l_sigma: self.sigma.lipschitz().to_f64_lossy(),
            l_g: lg,
            l_g_prime: curvature,
            c1: lg.max(g0),
            c2: lg.max(curvature),
        }
    }

    /// Sampled finite-difference checks of the declared constants (5% slack).
    pub fn check_constants(&self, modes: usize, samples: usize, seed: u64) -> Result<ConstantCheck> {
        let declared = self.constants.unwrap_or_else(|| self.derived_constants());
        let mut rng = substream(seed, Domain::Probe, 0);
        let mut draw = |scale: f64| -> Vec<T> {
            (0..modes)
                .map(|_| T::lit(scale * (2.0 * rng.random::<f64>() - 1.0)))
                .collect()
        };
        let mut worst = ConstantCheck::default();
        let (mut a, mut b) = (vec![T::zero(); modes], vec![T::zero(); modes]);
        for s in 0..samples {
            let scale = 10f64.powi((s % 4) as i32 - 1);
            let x = draw(scale);
            let y = draw(scale);
            let d = distance(&x, &y).to_f64_lossy();
            if d == 0.0 {
                continue;
            }
            self.drift(&x, &mut a);
            self.drift(&y, &mut b);
            worst.l_f = worst.l_f.max(distance(&a, &b).to_f64_lossy() / d);
            self.diffusion(&x, &mut a);
            self.diffusion(&y, &mut b);
            worst.l_sigma = worst.l_sigma.max(distance(&a, &b).to_f64_lossy() / d);
            self.fbm_coefficient(&x, &mut a);
            self.fbm_coefficient(&y, &mut b);
            let sup = a
                .iter()
                .zip(&b)
                .map(|(p, q)| (*p - *q).abs().to_f64_lossy())
                .fold(0.0, f64::max);
            worst.l_g = worst.l_g.max(sup / d);
            let grow = a.iter().map(|p| p.abs().to_f64_lossy()).fold(0.0, f64::max);
            worst.c1 = worst.c1.max(grow / (1.0 + norm(&x).to_f64_lossy()));
        }
        let slack = 1.05;
        let mut violations = Vec::new();
        for (name, seen, bound) in [
            ("L_f", worst.l_f, declared.l_f),
            ("L_sigma", worst.l_sigma, declared.l_sigma),
            ("L_g", worst.l_g, declared.l_g),
            ("c1", worst.c1, declared.c1),
        ] {
            if seen > bound * slack + 1e-12 {
                violations.push(format!("{name}: sampled {seen:.4} exceeds declared {bound:.4}"));
            }
        }
        worst.violations = violations;
        Ok(worst)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantCheck {
    pub l_f: f64,
    pub l_sigma: f64,
    pub l_g: f64,
    pub c1: f64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    ExponentialEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MildSolveConfig<T> {
    pub operator: SpectralOperator<T>,
    pub exponents: FracExponents<T>,
    pub dt: T,
    pub horizon: T,
    pub u0: Vec<T>,
    pub noise: QfbmSpec<T>,
    #[serde(default)]
    pub scheme: Scheme,
}

impl<T: Scalar> MildSolveConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero() && self.horizon > T::zero()) {
            return Err(param("time step and horizon must be positive"));
        }
        self.steps()?;
        if self.u0.len() != self.operator.modes() {
            return Err(param(format!(
                "initial value has {} modes, operator has {}",
                self.u0.len(),
                self.operator.modes()
            )));
        }
        if self.u0.iter().any(|x| !x.is_finite()) {
            return Err(param("initial value must be finite"));
        }
        if self.noise.modes > self.operator.modes() {
            return Err(param(format!(
                "fBm has {} modes but the Galerkin space only {}",
                self.noise.modes,
                self.operator.modes()
            )));
        }
        self.noise.validate()?;
        self.exponents.validate(self.noise.hurst)?;
        if !(self.exponents.beta > self.exponents.alpha) {
            return Err(param("initial data exponent beta must exceed alpha"));
        }
        Ok(())
    }

    /// Number of steps `T / Δt`, which must be an integer.
    pub fn steps(&self) -> Result<usize> {
        let ratio = (self.horizon / self.dt).to_f64_lossy();
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 * n.max(1.0) {
            return Err(param(format!(
                "horizon {} is not an integer multiple of dt {}",
                self.horizon, self.dt
            )));
        }
        Ok(n as usize)
    }

    pub fn grid(&self) -> Result<Grid<T>> {
        Grid::uniform(self.horizon, self.steps()? + 1)
    }
}

/// Driving noise on the solver grid: cumulative Wiener path (one mode per basis
/// vector) and the weighted Q-fBm path.
#[derive(Debug, Clone, PartialEq)]
pub struct MildNoise<T> {
    pub wiener: Path<T>,
    pub fbm: Path<T>,
}

/// `modes` independent Brownian motions on `grid`, mode `k` from stream `(seed, domain, k)`.
pub fn sample_wiener<T: Scalar>(grid: &Grid<T>, modes: usize, seed: u64, domain: Domain) -> Result<Path<T>> {
    let times = grid.times();
    let k = times.len();
    let mut values = vec![T::zero(); k * modes];
    for m in 0..modes {
        let mut rng = substream(seed, domain, m as u64);
        let mut acc = T::zero();
        for j in 1..k {
            acc = acc + (times[j] - times[j - 1]).sqrt() * T::standard_normal(&mut rng);
            values[j * modes + m] = acc;
        }
    }
    Path::hilbert(times.to_vec(), modes, values)
}

pub fn sample_noise<T: Scalar>(config: &MildSolveConfig<T>, seed: u64) -> Result<MildNoise<T>> {
    let grid = config.grid()?;
    let wiener = sample_wiener(&grid, config.operator.modes(), seed, Domain::Wiener)?;
    let fbm = QfbmSampler::new(config.noise, &grid)?.sample(seed);
    Ok(MildNoise { wiener, fbm })
}

/// Per-mode exponential-Euler factors for one step length.
#[derive(Debug, Clone)]
pub(crate) struct StepFactors<T> {
    /// `e^{-λΔ}`.
    pub decay: Vec<T>,
    /// `(1 - e^{-λΔ}) / λ`.
    pub drift: Vec<T>,
}

impl<T: Scalar> StepFactors<T> {
    pub fn new(eigenvalues: &[T], dt: T) -> Self {
        let decay = eigenvalues.iter().map(|&l| (-l * dt).exp()).collect();
        let drift = eigenvalues
            .iter()
            .map(|&l| -(-l * dt).exp_m1() / l)
            .collect();
        Self { decay, drift }
    }
}

pub(crate) fn increments<T: Scalar>(path: &Path<T>) -> Vec<T> {
    let d = path.dim();
    let v = path.raw_values();
    (0..(path.len() - 1) * d).map(|i| v[i + d] - v[i]).collect()
}

/// Pointwise coefficient map `u ↦ out`.
pub(crate) type CoefficientFn<'a, T> = &'a dyn Fn(&[T], &mut [T]);

/// Common stepping loop. `extra` is an optional absolutely continuous fBm-mode
/// drift (per step, per noise mode) multiplied by `g(u)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate<T: Scalar>(
    op: &SpectralOperator<T>,
    drift: CoefficientFn<'_, T>,
    sigma: Option<CoefficientFn<'_, T>>,
    g: Option<CoefficientFn<'_, T>>,
    u0: &[T],
    times: &[T],
    dw: Option<&[T]>,
    db: &[T],
    noise_modes: usize,
    extra: Option<&[T]>,
) -> Result<Path<T>> {
    let m = op.modes();
    let steps = times.len() - 1;
    let uniform = crate::path::uniform_step(times);
    let mut factors = StepFactors::new(op.eigenvalues(), times[1] - times[0]);
    let mut values = Vec::with_capacity(times.len() * m);
    values.extend_from_slice(u0);
    let mut u = u0.to_vec();
    let (mut f, mut s, mut gv) = (vec![T::zero(); m], vec![T::zero(); m], vec![T::zero(); m]);
    let sigma = sigma.zip(dw);
    for j in 0..steps {
        let dt = times[j + 1] - times[j];
        if uniform.is_none() {
            factors = StepFactors::new(op.eigenvalues(), dt);
        }
        drift(&u, &mut f);
        if let Some((sig, _)) = sigma {
            sig(&u, &mut s);
        }
        if let Some(gf) = g {
            gf(&u, &mut gv);
        }
        for k in 0..m {
            let mut kick = T::zero();
            if let Some((_, w)) = sigma {
                kick = kick + s[k] * w[j * m + k];
            }
            let mut forcing = f[k];
            if g.is_some() && k < noise_modes {
                kick = kick + gv[k] * db[j * noise_modes + k];
                if let Some(e) = extra {
                    forcing = forcing + gv[k] * e[j * noise_modes + k];
                }
            }
            u[k] = factors.decay[k] * (u[k] + kick) + factors.drift[k] * forcing;
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(Error::BlowUp {
                step: j + 1,
                time: times[j + 1].to_f64_lossy(),
            });
        }
        values.extend_from_slice(&u);
    }
    Path::hilbert(times.to_vec(), m, values)
}

impl<T: Scalar> CoefficientSet<T> {
    /// Borrowed `(f, σ, g)` maps for [`integrate`]; zero `σ`/`g` are skipped.
    #[allow(clippy::type_complexity)]
    pub(crate) fn maps(
        &self,
    ) -> (
        impl Fn(&[T], &mut [T]) + '_,
        Option<impl Fn(&[T], &mut [T]) + '_>,
        Option<impl Fn(&[T], &mut [T]) + '_>,
    ) {
        (
            move |u: &[T], o: &mut [T]| self.drift(u, o),
            (!self.sigma.is_zero()).then_some(move |u: &[T], o: &mut [T]| self.diffusion(u, o)),
            (!self.g.is_zero()).then_some(move |u: &[T], o: &mut [T]| self.fbm_coefficient(u, o)),
        )
    }
}

fn check_noise<T: Scalar>(config: &MildSolveConfig<T>, noise: &MildNoise<T>) -> Result<()> {
    let grid = config.grid()?;
    let m = config.operator.modes();
    for (name, p) in [("wiener", &noise.wiener), ("fbm", &noise.fbm)] {
        if p.len() != grid.len()
            || p
                .times()
                .iter()
                .zip(grid.times())
                .any(|(a, b)| (*a - *b).abs() > T::lit(1e-9) * config.horizon)
        {
            return Err(Error::GridMismatch(format!("{name} noise is not on the solver grid")));
        }
    }
    if noise.wiener.dim() != m {
        return Err(Error::GridMismatch(format!(
            "Wiener noise has {} modes, expected {m}",
            noise.wiener.dim()
        )));
    }
    if noise.fbm.dim() > m {
        return Err(Error::GridMismatch("fBm has more modes than the Galerkin space".into()));
    }
    Ok(())
}

/// Mild solution on the configuration grid.
pub fn solve_mild<T: Scalar>(
    config: &MildSolveConfig<T>,
    coeffs: &CoefficientSet<T>,
    noise: &MildNoise<T>,
) -> Result<Path<T>> {
    config.validate()?;
    check_noise(config, noise)?;
    let dw = increments(&noise.wiener);
    let db = increments(&noise.fbm);
    let (f, sig, g) = coeffs.maps();
    integrate(
        &config.operator,
        &f,
        sig.as_ref().map(|x| x as CoefficientFn<T>),
        g.as_ref().map(|x| x as CoefficientFn<T>),
        &config.u0,
        noise.wiener.times(),
        Some(&dw),
        &db,
        noise.fbm.dim(),
        None,
    )
}

/// Mollified solve and the stopping time used.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedSolution<T> {
    pub path: Path<T>,
    pub tau: T,
}

/// Mild solve with `g(u) dB^H` replaced by the drift `g(u) d/ds B^{H,N,n}(s)`.
/// `level = None` skips the stopping.
pub fn solve_mollified<T: Scalar>(
    config: &MildSolveConfig<T>,
    coeffs: &CoefficientSet<T>,
    noise: &MildNoise<T>,
    level: Option<T>,
    n: usize,
) -> Result<MollifiedSolution<T>> {
    config.validate()?;
    check_noise(config, noise)?;
    let tau = match level {
        Some(l) => stopping_time(&noise.fbm, config.exponents.alpha, l, config.horizon)?,
        None => config.horizon,
    };
    let stopped = stop_path(&noise.fbm, tau)?;
    let derivative = mollified_derivatives(&stopped, n)?;
    let dw = increments(&noise.wiener);
    let nm = noise.fbm.dim();
    let zero = vec![T::zero(); (noise.fbm.len() - 1) * nm];
    let (f, sig, g) = coeffs.maps();
    let path = integrate(
        &config.operator,
        &f,
        sig.as_ref().map(|x| x as CoefficientFn<T>),
        g.as_ref().map(|x| x as CoefficientFn<T>),
        &config.u0,
        noise.wiener.times(),
        Some(&dw),
        &zero,
        nm,
        Some(&derivative),
    )?;
    Ok(MollifiedSolution { path, tau })
}

/// `n (β(s_j) - β((s_j - 1/n) ∨ 0))` at every left endpoint `s_j`, row-major.
fn mollified_derivatives<T: Scalar>(path: &Path<T>, n: usize) -> Result<Vec<T>> {
    let w = T::one() / T::from_usize_lossy(n);
    let max_step = path
        .times()
        .windows(2)
        .map(|p| p[1] - p[0])
        .fold(T::zero(), T::max);
    if w < T::lit(2.0) * max_step * (T::one() - T::lit(1e-9)) {
        return Err(Error::Resolution(format!(
            "mollifier window 1/n = {w} is below two grid steps"
        )));
    }
    let nn = T::from_usize_lossy(n);
    let d = path.dim();
    let mut out = Vec::with_capacity((path.len() - 1) * d);
    let mut back = vec![T::zero(); d];
    for j in 0..path.len() - 1 {
        let s = path.times()[j];
        path.interpolate_into((s - w).max(path.start()), &mut back);
        for c in 0..d {
            out.push(nn * (path.value(j)[c] - back[c]));
        }
    }
    Ok(out)
}

/// `∫_0^t S_{t-s} σ_s dW_s` by left-point sums, `σ` given per mode on the grid.
pub fn stochastic_convolution_wiener<T: Scalar>(
    op: &SpectralOperator<T>,
    sigma: &Path<T>,
    wiener: &Path<T>,
) -> Result<Path<T>> {
    same_grid(sigma, wiener)?;
    if sigma.dim() != op.modes() || wiener.dim() != op.modes() {
        return Err(Error::GridMismatch("σ and W must have one entry per operator mode".into()));
    }
    convolve(op, sigma, wiener)
}

/// `Σ_i ∫_0^t S_{t-s} g_i(s) dβ̃_i(s)` by left-point Young sums; `β̃_i = √λ_i β_i`.
pub fn stochastic_convolution_fbm<T: Scalar>(
    op: &SpectralOperator<T>,
    g: &Path<T>,
    fbm: &Path<T>,
    alpha: T,
) -> Result<Path<T>> {
    same_grid(g, fbm)?;
    if g.dim() != fbm.dim() || fbm.dim() > op.modes() {
        return Err(Error::GridMismatch(
            "g needs one entry per fBm mode, and fBm modes cannot exceed operator modes".into(),
        ));
    }
    if !(alpha > T::zero() && alpha < T::lit(0.5)) {
        return Err(param(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    let out = convolve(op, g, fbm)?;
    if out.raw_values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergent("fBm convolution is not finite".into()));
    }
    Ok(out)
}

fn convolve<T: Scalar>(op: &SpectralOperator<T>, integrand: &Path<T>, driver: &Path<T>) -> Result<Path<T>> {
    let m = op.modes();
    let d = driver.dim();
    let times = integrand.times();
    let mut values = vec![T::zero(); times.len() * m];
    let mut z = vec![T::zero(); m];
    for j in 0..times.len() - 1 {
        let dt = times[j + 1] - times[j];
        for k in 0..m {
            let kick = if k < d {
                integrand.value(j)[k] * (driver.value(j + 1)[k] - driver.value(j)[k])
            } else {
                T::zero()
            };
            z[k] = (-op.eigenvalues()[k] * dt).exp() * (z[k] + kick);
        }
        values[(j + 1) * m..(j + 2) * m].copy_from_slice(&z);
    }
    Path::hilbert(times.to_vec(), m, values)
}

/// Zähle-integral evaluation of `∫_0^T G dB^H` with `G e_i = g_i` and the bound
/// `Λ_{α,B}^{0,T} sup_i |g_i|_{α,1}`. Returns `(|∫ G dB|, bound)`.
pub fn fbm_integral_bound<T: Scalar>(g: &Path<T>, fbm: &Path<T>, alpha: T) -> Result<(T, T)> {
    same_grid(g, fbm)?;
    if g.dim() != fbm.dim() {
        return Err(Error::GridMismatch("g needs one entry per fBm mode".into()));
    }
    let (s, t) = (g.start(), g.end());
    let mut integral = Vec::with_capacity(g.dim());
    let mut sup = T::zero();
    for i in 0..g.dim() {
        let gi = g.component(i);
        integral.push(stieltjes_integral(&gi, &fbm.component(i), alpha, s, t)?);
        sup = sup.max(walpha1_seminorm(&gi, alpha)?);
    }
    Ok((norm(&integral), qfbm_lambda(fbm, alpha, t)? * sup))
}

/// One pathwise estimate: measured left side, bound without its constant, ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRatio {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl BoundRatio {
    fn new(lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Self { lhs, rhs, ratio }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KBoundsReport {
    pub k1: BoundRatio,
    pub k2: BoundRatio,
    pub k3: BoundRatio,
    pub k4: BoundRatio,
}

/// Quadrature helpers for the K-bound right-hand sides on a fixed grid.
struct KQuad<'a> {
    times: &'a [f64],
    inner: PowerKernel<f64>,
}

impl<'a> KQuad<'a> {
    fn new(times: &'a [f64], alpha: f64) -> Self {
        Self {
            times,
            inner: PowerKernel::new(times, 1.0 + alpha),
        }
    }

    /// `∫_{t_lo}^{t_k} d(k, q) / (t_k - q)^{1+α} dq` with `d(k,k) = 0`.
    fn inner(&self, lo: usize, k: usize, d: impl Fn(usize, usize) -> f64) -> f64 {
        self.inner.backward(|j| d(k, j), lo, k)
    }

    fn trapezoid(&self, lo: usize, hi: usize, g: impl Fn(usize) -> f64) -> f64 {
        (lo..hi)
            .map(|k| 0.5 * (self.times[k + 1] - self.times[k]) * (g(k) + g(k + 1)))
            .sum()
    }

    /// `∫_{t_lo}^{t_hi} [(r - t_lo)^{-a} + (t_hi - r)^{-a}] g(r) dr`.
    fn two_sided(&self, lo: usize, hi: usize, a: f64, g: impl Fn(usize) -> f64) -> f64 {
        let k = PowerKernel::new(self.times, a);
        k.forward(&g, lo, hi) + k.backward(&g, lo, hi)
    }

    /// `∫_0^{t_hi} (t_hi - r)^{-b} r^{-a} g(r) dr`, split at the midpoint index.
    fn beta_kernel(&self, hi: usize, b: f64, a: f64, g: impl Fn(usize) -> f64) -> f64 {
        let mid = hi / 2;
        let times = self.times;
        let left = PowerKernel::new(times, a).forward(|j| (times[hi] - times[j]).powf(-b) * g(j), 0, mid);
        let right = PowerKernel::new(times, b).backward(
            |j| {
                if times[j] > 0.0 {
                    times[j].powf(-a) * g(j)
                } else {
                    0.0
                }
            },
            mid,
            hi,
        );
        left + right
    }
}

/// Pathwise K₁–K₄ estimates: the left sides are Zähle integrals mode by mode,
/// the right sides are the bound expressions without their constant.
pub fn k_bounds_report(
    op: &SpectralOperator<f64>,
    coeffs: &CoefficientSet<f64>,
    u: &Path<f64>,
    v: &Path<f64>,
    fbm: &Path<f64>,
    alpha: f64,
    beta: f64,
    s: f64,
    t: f64,
) -> Result<KBoundsReport> {
    same_grid(u, v)?;
    same_grid(u, fbm)?;
    if !(alpha < beta) {
        return Err(param("need alpha < beta"));
    }
    if !(s > 0.0 && s < t) {
        return Err(param(format!("need 0 < s < t, got s={s}, t={t}")));
    }
    let is = u.require_index(s)?;
    let it = u.require_index(t)?;
    let times = u.times();
    let m = op.modes();
    if u.dim() != m || v.dim() != m {
        return Err(Error::GridMismatch("u and v must live in the Galerkin space".into()));
    }
    let nm = fbm.dim();
    let lam = qfbm_lambda(fbm, alpha, t)?;
    let eig = op.eigenvalues();
    let gu: Vec<Vec<f64>> = (0..u.len()).map(|k| u.value(k).iter().map(|&x| coeffs.g.eval(x)).collect()).collect();
    let gv: Vec<Vec<f64>> = (0..v.len()).map(|k| v.value(k).iter().map(|&x| coeffs.g.eval(x)).collect()).collect();

    // integral of h_i(r) dβ̃_i over [lo, hi] for every fBm mode, Euclidean norm
    let integral = |lo: usize, hi: usize, h: &dyn Fn(usize, usize) -> f64| -> Result<f64> {
        let mut parts = Vec::with_capacity(nm);
        for i in 0..nm {
            let hv: Vec<f64> = (0..u.len()).map(|k| h(i, k)).collect();
            let hp = Path::scalar(times.to_vec(), hv)?;
            parts.push(stieltjes_integral(&hp, &fbm.component(i), alpha, times[lo], times[hi])?);
        }
        Ok(norm(&parts))
    };
    let st = |i: usize, r: usize| (-eig[i] * (t - times[r])).exp();
    let ss = |i: usize, r: usize| (-eig[i] * (s - times[r])).exp();

    let k1_lhs = integral(is, it, &|i, r| st(i, r) * gu[r][i])?;
    let k2_lhs = integral(0, is, &|i, r| (st(i, r) - ss(i, r)) * gu[r][i])?;
    let k3_lhs = integral(is, it, &|i, r| st(i, r) * (gu[r][i] - gv[r][i]))?;
    let k4_lhs = integral(0, is, &|i, r| (st(i, r) - ss(i, r)) * (gu[r][i] - gv[r][i]))?;

    let q = KQuad::new(times, alpha);
    let size_u = |k: usize| 1.0 + norm(u.value(k));
    let gap = |k: usize| distance(u.value(k), v.value(k));
    let du = |k: usize, j: usize| distance(u.value(k), u.value(j));
    let dv = |k: usize, j: usize| distance(v.value(k), v.value(j));
    let ddiff = |k: usize, j: usize| {
        u.value(k)
            .iter()
            .zip(v.value(k))
            .zip(u.value(j).iter().zip(v.value(j)))
            .map(|((a, b), (c, d))| (a - b - c + d).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let scale = (t - s).powf(beta);

    let k1_rhs = lam
        * (q.two_sided(is, it, alpha, size_u) + q.trapezoid(is, it, |k| q.inner(is, k, du)));
    let beta_k = PowerKernel::new(times, beta);
    let ab_k = PowerKernel::new(times, alpha + beta);
    let k2_rhs = lam
        * scale
        * (q.beta_kernel(is, beta, alpha, size_u)
            + ab_k.backward(size_u, 0, is)
            + beta_k.backward(|k| q.inner(0, k, du), 0, is));
    let k3_rhs = lam
        * (q.two_sided(is, it, alpha, gap)
            + q.trapezoid(is, it, |k| gap(k) * q.inner(is, k, |a, b| du(a, b) + dv(a, b)))
            + q.trapezoid(is, it, |k| q.inner(is, k, ddiff)));
    let k4_rhs = lam
        * scale
        * (q.beta_kernel(is, beta, alpha, gap)
            + ab_k.backward(gap, 0, is)
            + beta_k.backward(|k| gap(k) * q.inner(0, k, |a, b| du(a, b) + dv(a, b)), 0, is)
            + beta_k.backward(|k| q.inner(0, k, ddiff), 0, is));
    Ok(KBoundsReport {
        k1: BoundRatio::new(k1_lhs, k1_rhs),
        k2: BoundRatio::new(k2_lhs, k2_rhs),
        k3: BoundRatio::new(k3_lhs, k3_rhs),
        k4: BoundRatio::new(k4_lhs, k4_rhs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::dirichlet_laplacian;

    fn config(m: usize, dt: f64, horizon: f64) -> MildSolveConfig<f64> {
        MildSolveConfig {
            operator: dirichlet_laplacian(m, 1.0).unwrap(),
            exponents: FracExponents::defaults(0.7),
            dt,
            horizon,
            u0: (0..m).map(|k| 1.0 / (k + 1) as f64).collect(),
            noise: QfbmSpec::new(0.7, 3.0, m).unwrap(),
            scheme: Scheme::ExponentialEuler,
        }
    }

    #[test]
    fn pure_decay_is_exact() {
        let cfg = config(3, 1.0 / 64.0, 1.0);
        let noise = sample_noise(&cfg, 1).unwrap();
        let u = solve_mild(&cfg, &CoefficientSet::zero(), &noise).unwrap();
        for (k, &t) in u.times().iter().enumerate() {
            for (i, &l) in cfg.operator.eigenvalues().iter().enumerate() {
                let exact = cfg.u0[i] * (-l * t).exp();
                // one rounding per step
                let tol = 4.0 * (k as f64 + 1.0) * f64::EPSILON * exact.abs();
                assert!((u.value(k)[i] - exact).abs() <= tol);
            }
        }
    }

    #[test]
    fn linear_drift_matches_ode() {
        let mut cfg = config(1, 1.0 / 1024.0, 0.5);
        cfg.u0 = vec![2.0];
        let coeffs = CoefficientSet::new(
            SineAffine { constant: 0.0, sine: 0.0, linear: 1.0 },
            SineAffine::zero(),
            SineAffine::zero(),
        );
        let noise = sample_noise(&cfg, 2).unwrap();
        let u = solve_mild(&cfg, &coeffs, &noise).unwrap();
        let l = cfg.operator.first();
        let exact = 2.0 * (-(l + 1.0) * 0.5f64).exp();
        // first-order scheme: relative error ≈ t Δ (λ+1) / 2
        let predicted = 0.5 * 0.5 * cfg.dt * (l + 1.0);
        let err = (u.value(u.len() - 1)[0] - exact).abs() / exact;
        assert!(err < 1.2 * predicted, "{err} vs {predicted}");
    }

    #[test]
    fn bad_configs_rejected() {
        let mut cfg = config(2, 0.3, 1.0);
        assert!(cfg.validate().is_err());
        cfg.dt = 0.25;
        cfg.u0 = vec![1.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mollified_without_g_equals_mild() {
        let cfg = config(2, 1.0 / 128.0, 1.0);
        let coeffs = CoefficientSet::new(
            SineAffine { constant: 0.5, sine: 0.3, linear: 1.0 },
            SineAffine::constant(0.2),
            SineAffine::zero(),
        );
        let noise = sample_noise(&cfg, 3).unwrap();
        let a = solve_mild(&cfg, &coeffs, &noise).unwrap();
        let b = solve_mollified(&cfg, &coeffs, &noise, Some(1.0), 16).unwrap();
        assert_eq!(a, b.path);
    }

    #[test]
    fn convolutions_vanish_for_zero_integrand() {
        let cfg = config(2, 1.0 / 64.0, 1.0);
        let noise = sample_noise(&cfg, 4).unwrap();
        let zero = noise.wiener.scale(0.0);
        let z = stochastic_convolution_wiener(&cfg.operator, &zero, &noise.wiener).unwrap();
        assert!(z.raw_values().iter().all(|&x| x == 0.0));
        let zf = noise.fbm.scale(0.0);
        let z = stochastic_convolution_fbm(&cfg.operator, &zf, &noise.fbm, 0.4).unwrap();
        assert!(z.raw_values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn k_bounds_vanish_for_equal_paths() {
        let cfg = config(2, 1.0 / 128.0, 1.0);
        let coeffs = CoefficientSet::new(
            SineAffine::zero(),
            SineAffine::zero(),
            SineAffine { constant: 1.0, sine: 0.5, linear: 0.0 },
        );
        let noise = sample_noise(&cfg, 5).unwrap();
        let u = solve_mild(&cfg, &coeffs, &noise).unwrap();
        let r = k_bounds_report(&cfg.operator, &coeffs, &u, &u, &noise.fbm, 0.4, 0.55, 0.5, 1.0).unwrap();
        assert_eq!(r.k3.lhs, 0.0);
        assert_eq!(r.k4.lhs, 0.0);
        assert!(r.k1.ratio.is_finite() && r.k2.ratio.is_finite());
        assert!(k_bounds_report(&cfg.operator, &coeffs, &u, &u, &noise.fbm, 0.4, 0.55, 0.5, 0.5).is_err());
    }

    #[test]
    fn declared_constants_checked() {
        let mut c = CoefficientSet::new(
            SineAffine { constant: 0.0, sine: 1.0, linear: 2.0 },
            SineAffine::constant(1.0),
            SineAffine { constant: 1.0, sine: 0.5, linear: 0.0 },
        );
        assert!(c.check_constants(3, 200, 1).unwrap().violations.is_empty());
        let mut declared = c.derived_constants();
        declared.l_f = 1.0;
        c.constants = Some(declared);
        let report = c.check_constants(3, 200, 1).unwrap();
        assert!(report.violations.iter().any(|v| v.starts_with("L_f")));
    }
}
