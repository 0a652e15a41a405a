//! Two-time-scale system
//!
//! ```text
//! dX = (AX + b(X, Y)) dt + g(X) dB^H
//! dY = ε⁻¹ (AY + F(X, Y)) dt + ε^{-1/2} G(X, Y) dW
//! ```
//!
//! with its frozen fast equation, the averaged drift `b̄(x) = ∫ b(x, z) μ^x(dz)`,
//! the averaged slow equation and the block-reset auxiliary processes used in
//! the averaging argument. All coefficients act diagonally in the eigenbasis.

use std::cell::Cell;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fbm::{QfbmSampler, QfbmSpec};
use crate::fracint::{balpha2_norm, FracExponents};
use crate::path::{Grid, Path};
use crate::rng::{child_seed, substream, Domain, StreamRng};
use crate::scalar::{distance, dot, norm, Scalar};
use crate::semigroup::SpectralOperator;
use crate::spde::{increments, integrate, CoefficientFn, SineAffine, StepFactors};
use crate::stats::{mean_estimate, MeanEstimate};

/// Coefficients of a fast–slow system. Every map writes one value per mode.
pub trait FastSlowSystem<T: Scalar>: Sync {
    /// Slow drift `b(x, y)`.
    fn slow_drift(&self, x: &[T], y: &[T], out: &mut [T]);
    /// Diagonal of the fBm coefficient `g(x)`.
    fn slow_noise(&self, x: &[T], out: &mut [T]);
    /// Fast drift `F(x, y)`.
    fn fast_drift(&self, x: &[T], y: &[T], out: &mut [T]);
    /// Diagonal of the Wiener coefficient `G(x, y)`.
    fn fast_noise(&self, x: &[T], y: &[T], out: &mut [T]);
}

fn default_saturation<T: Scalar>() -> T {
    T::lit(50.0)
}

/// Reference system, mode by mode:
///
/// ```text
/// F_k = -c y_k + s sin y_k + d0 + d1 sin x_k      G_k = γ
/// b_k = a sin x_k + B clamp(y_k, ±R)             g_k = g(x_k)
/// ```
///
/// The clamp keeps `b` bounded; with the default `R = 50` it is never active
/// on the stationary law of the fast variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    deny_unknown_fields,
    bound(deserialize = "T: Scalar + Deserialize<'de>")
)]
pub struct LinearTestSystem<T> {
    #[serde(default)]
    pub fast_decay: T,
    #[serde(default)]
    pub fast_sine: T,
    #[serde(default)]
    pub fast_offset: T,
    #[serde(default)]
    pub fast_coupling: T,
    #[serde(default)]
    pub fast_noise: T,
    #[serde(default)]
    pub slow_sine: T,
    #[serde(default)]
    pub slow_fast: T,
    #[serde(default = "default_saturation")]
    pub saturation: T,
    #[serde(default)]
    pub g: SineAffine<T>,
}

impl<T: Scalar> LinearTestSystem<T> {
    /// The system used throughout the averaging experiments.
    pub fn canonical() -> Self {
        Self {
            fast_decay: T::one(),
            fast_sine: T::zero(),
            fast_offset: T::lit(0.8),
            fast_coupling: T::lit(0.4),
            fast_noise: T::lit(0.8),
            slow_sine: T::lit(0.5),
            slow_fast: T::one(),
            saturation: default_saturation(),
            g: SineAffine {
                constant: T::lit(0.5),
                sine: T::lit(0.2),
                linear: T::zero(),
            },
        }
    }

    /// Same system with a slow drift that ignores the fast variable.
    pub fn decoupled(&self) -> Self {
        Self {
            slow_fast: T::zero(),
            ..self.clone()
        }
    }

    pub fn is_linear(&self) -> bool {
        self.fast_sine == T::zero()
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.fast_decay,
            self.fast_sine,
            self.fast_offset,
            self.fast_coupling,
            self.fast_noise,
            self.slow_sine,
            self.slow_fast,
            self.saturation,
            self.g.constant,
            self.g.sine,
            self.g.linear,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(param("fast-slow coefficients must be finite"));
        }
        if !(self.saturation > T::zero()) {
            return Err(param("saturation radius must be positive"));
        }
        Ok(())
    }

    /// Constants implied by the parametric form on `modes` modes.
    ///
    /// Requires `c > |s|`; otherwise there is no positive `β₁`.
    pub fn derived_params(&self, modes: usize) -> Result<DissipativityParams> {
        let f = |x: T| x.to_f64_lossy();
        let (c, s) = (f(self.fast_decay), f(self.fast_sine).abs());
        let (d0, d1) = (f(self.fast_offset).abs(), f(self.fast_coupling).abs());
        let (gam, a, b, r) = (
            f(self.fast_noise),
            f(self.slow_sine).abs(),
            f(self.slow_fast).abs(),
            f(self.saturation),
        );
        let m = modes as f64;
        if !(c > s) {
            return Err(param(format!(
                "fast decay c = {c} must exceed |s| = {s} for a positive beta_1"
            )));
        }
        let gap = c - s;
        let (beta1, beta2) = if d0 + d1 == 0.0 {
            (gap, 0.0)
        } else {
            (gap / 2.0, m * (d0 + d1).powi(2) / (2.0 * gap))
        };
        Ok(DissipativityParams {
            c1: 2.0 * a.max(b).powi(2),
            c2: 2.0 * (c + s).max(d1).powi(2),
            c3: (2.0 * (c + s).powi(2)).max(2.0 * m * (d0 + d1).powi(2) + m * gam * gam),
            c4: m * (a + b * r).powi(2),
            beta1,
            beta2,
            beta3: -c + s,
            bounded_fast: false,
        })
    }

    /// Per-mode averaged drift `b̄_k(x) = a sin x_k + B (d0 + d1 sin x_k)/(λ̄_k + c)`.
    ///
    /// Exact for the Gaussian stationary law when `s = 0` (the clamp is ignored).
    pub fn analytic_bbar(&self, op: &SpectralOperator<T>) -> Result<Vec<SineAffine<T>>> {
        if !self.is_linear() {
            return Err(Error::Unsupported(
                "closed-form averaged drift needs a fast drift affine in y (fast_sine = 0)".into(),
            ));
        }
        Ok(op
            .eigenvalues()
            .iter()
            .map(|&l| {
                let w = self.slow_fast / (l + self.fast_decay);
                SineAffine {
                    constant: w * self.fast_offset,
                    sine: self.slow_sine + w * self.fast_coupling,
                    linear: T::zero(),
                }
            })
            .collect())
    }
}

impl<T: Scalar> FastSlowSystem<T> for LinearTestSystem<T> {
    fn slow_drift(&self, x: &[T], y: &[T], out: &mut [T]) {
        let r = self.saturation;
        for ((o, &xk), &yk) in out.iter_mut().zip(x).zip(y) {
            *o = self.slow_sine * xk.sin() + self.slow_fast * yk.max(-r).min(r);
        }
    }

    fn slow_noise(&self, x: &[T], out: &mut [T]) {
        for (o, &xk) in out.iter_mut().zip(x) {
            *o = self.g.eval(xk);
        }
    }

    fn fast_drift(&self, x: &[T], y: &[T], out: &mut [T]) {
        for ((o, &xk), &yk) in out.iter_mut().zip(x).zip(y) {
            *o = -self.fast_decay * yk
                + self.fast_sine * yk.sin()
                + self.fast_offset
                + self.fast_coupling * xk.sin();
        }
    }

    fn fast_noise(&self, _x: &[T], _y: &[T], out: &mut [T]) {
        out.fill(self.fast_noise);
    }
}

/// Lipschitz, growth and dissipativity constants of `(b, F, G)`.
///
/// * `|b(x₁,y₁) − b(x₂,y₂)|² ≤ C₁(|Δx|² + |Δy|²)`
/// * `|ΔF|² + |ΔG|² ≤ C₂(|Δx|² + |Δy|²)`
/// * `|F|² + |G|² ≤ C₃(1 + |x|² + |y|²)`, `|b|² ≤ C₄(1 + |x|² + |y|²)`
/// * `⟨y, F(x,y)⟩ ≤ −β₁|y|² + β₂`, `⟨Δy, ΔF⟩ ≤ β₃|Δy|²`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DissipativityParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    /// `F` and `G` are declared bounded, which lifts the `C₃` threshold.
    #[serde(default)]
    pub bounded_fast: bool,
}

impl DissipativityParams {
    /// `η = 2λ̄₁ − 2β₃ − C₂`, the contraction rate of the frozen equation.
    pub fn eta(&self, lambda1: f64) -> f64 {
        2.0 * lambda1 - 2.0 * self.beta3 - self.c2
    }

    /// `κ = 2λ̄₁ + 2β₁ − C₃`.
    pub fn kappa(&self, lambda1: f64) -> f64 {
        2.0 * lambda1 + 2.0 * self.beta1 - self.c3
    }

    /// Upper limit `2λ̄₁²/(2 + λ̄₁)` on `C₃`.
    pub fn growth_threshold(lambda1: f64) -> f64 {
        2.0 * lambda1 * lambda1 / (2.0 + lambda1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub lines: Vec<ConditionLine>,
    pub eta: f64,
    pub kappa: f64,
    pub threshold: f64,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    /// Message naming every failed condition, if any.
    pub fn rejection(&self) -> Option<String> {
        let failed: Vec<String> = self
            .lines
            .iter()
            .filter(|l| !l.pass)
            .map(|l| format!("{}: {}", l.name, l.detail))
            .collect();
        (!failed.is_empty()).then(|| failed.join("; "))
    }

    pub fn require(&self) -> Result<()> {
        match self.rejection() {
            Some(msg) => Err(Error::Condition(msg)),
            None => Ok(()),
        }
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.lines.push(ConditionLine {
            name: name.to_string(),
            pass,
            detail,
        });
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.name, l.detail)?;
        }
        Ok(())
    }
}

const SLACK: f64 = 1.05;

struct Worst {
    ratio: f64,
    at: f64,
}

impl Worst {
    fn new() -> Self {
        Self { ratio: 0.0, at: 0.0 }
    }

    fn see(&mut self, ratio: f64, scale: f64) {
        if ratio > self.ratio || ratio.is_nan() {
            self.ratio = ratio;
            self.at = scale;
        }
    }
}

/// At most 12 significant digits, trailing zeros dropped.
fn short(x: f64) -> String {
    let s = format!("{:.*}", (11 - x.abs().log10().floor().max(0.0) as usize).min(11), x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Checks declared constants against sampled finite differences and evaluates
/// the hard inequalities on `η`, `κ` and `C₃`.
pub fn validate_conditions<T: Scalar, S: FastSlowSystem<T>>(
    system: &S,
    params: &DissipativityParams,
    op: &SpectralOperator<T>,
    samples: usize,
    seed: u64,
) -> ConditionReport {
    let m = op.modes();
    let l1 = op.first().to_f64_lossy();
    let p = params;
    let eta = p.eta(l1);
    let kappa = p.kappa(l1);
    let threshold = DissipativityParams::growth_threshold(l1);
    let mut report = ConditionReport {
        lines: Vec::new(),
        eta,
        kappa,
        threshold,
    };

    let mut rng = substream(seed, Domain::Probe, 1);
    let draw = |scale: f64, rng: &mut StreamRng| -> Vec<T> {
        (0..m)
            .map(|_| T::lit(scale * (2.0 * rng.random::<f64>() - 1.0)))
            .collect()
    };
    let sq = |v: &[T]| {
        let n = norm(v).to_f64_lossy();
        n * n
    };
    let (mut lip_b, mut lip_fg, mut grow_fg, mut grow_b, mut diss, mut mono, mut lip_g) = (
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
        Worst::new(),
    );
    let mut buf: Vec<Vec<T>> = vec![vec![T::zero(); m]; 6];
    for i in 0..samples {
        let scale = 10f64.powi((i % 4) as i32 - 1);
        let (x1, x2, y1, y2) = (
            draw(scale, &mut rng),
            draw(scale, &mut rng),
            draw(scale, &mut rng),
            draw(scale, &mut rng),
        );
        let dxy = distance(&x1, &x2).to_f64_lossy().powi(2) + distance(&y1, &y2).to_f64_lossy().powi(2);
        let size = 1.0 + sq(&x1) + sq(&y1);
        let [b1, b2, f1, f2, g1, g2] = &mut buf[..] else {
            unreachable!()
        };
        system.slow_drift(&x1, &y1, b1);
        system.slow_drift(&x2, &y2, b2);
        system.fast_drift(&x1, &y1, f1);
        system.fast_drift(&x2, &y2, f2);
        system.fast_noise(&x1, &y1, g1);
        system.fast_noise(&x2, &y2, g2);
        if dxy > 0.0 {
            lip_b.see(distance(b1, b2).to_f64_lossy().powi(2) / (p.c1 * dxy), scale);
            let dfg = distance(f1, f2).to_f64_lossy().powi(2) + distance(g1, g2).to_f64_lossy().powi(2);
            lip_fg.see(dfg / (p.c2 * dxy), scale);
        }
        grow_fg.see((sq(f1) + sq(g1)) / (p.c3 * size), scale);
        grow_b.see(sq(b1) / (p.c4 * size), scale);

        // ⟨y, F⟩ ≤ −β₁|y|² + β₂ with slack on the magnitude of the right side
        let y2n = sq(&y1);
        let lhs = dot(&y1, f1).to_f64_lossy();
        let rhs = -p.beta1 * y2n + p.beta2;
        let tol = (SLACK - 1.0) * (p.beta1 * y2n + p.beta2.abs()) + 1e-12;
        diss.see(if lhs <= rhs + tol { 0.0 } else { (lhs - rhs) / tol }, scale);

        // one-sided Lipschitz in y at fixed x
        system.fast_drift(&x1, &y2, f2);
        let dy: Vec<T> = y1.iter().zip(&y2).map(|(a, b)| *a - *b).collect();
        let df: Vec<T> = f1.iter().zip(f2.iter()).map(|(a, b)| *a - *b).collect();
        let dy2 = sq(&dy);
        if dy2 > 0.0 {
            let lhs = dot(&dy, &df).to_f64_lossy();
            let rhs = p.beta3 * dy2;
            let tol = (SLACK - 1.0) * p.beta3.abs() * dy2 + 1e-12 * dy2;
            mono.see(if lhs <= rhs + tol { 0.0 } else { (lhs - rhs) / tol }, scale);
        }

        system.slow_noise(&x1, g1);
        system.slow_noise(&x2, g2);
        let dx = distance(&x1, &x2).to_f64_lossy();
        if dx > 0.0 {
            let sup = g1
                .iter()
                .zip(g2.iter())
                .map(|(a, b)| (*a - *b).abs().to_f64_lossy())
                .fold(0.0, f64::max);
            lip_g.see(sup / dx, scale);
        }
    }

    let sampled = |w: &Worst, what: &str, declared: &str| {
        (
            w.ratio <= SLACK,
            format!(
                "{what}: worst sampled ratio to {declared} is {:.4} (at box scale {}, {samples} samples)",
                w.ratio, w.at
            ),
        )
    };
    let (ok, d) = sampled(&lip_b, "|b(x1,y1)-b(x2,y2)|^2 <= C_1(|dx|^2+|dy|^2)", &format!("C_1 = {}", short(p.c1)));
    report.push("lipschitz-slow", ok, d);
    let (ok, d) = sampled(&lip_fg, "|dF|^2+|dG|^2 <= C_2(|dx|^2+|dy|^2)", &format!("C_2 = {}", short(p.c2)));
    report.push("lipschitz-fast", ok, d);
    let (ok, d) = sampled(&grow_fg, "|F|^2+|G|^2 <= C_3(1+|x|^2+|y|^2)", &format!("C_3 = {}", short(p.c3)));
    report.push("growth-fast", ok, d);
    let (ok, d) = sampled(&grow_b, "|b|^2 <= C_4(1+|x|^2+|y|^2)", &format!("C_4 = {}", short(p.c4)));
    report.push("growth-slow", ok, d);
    report.push(
        "g-regularity",
        lip_g.ratio.is_finite(),
        format!("sampled Lipschitz ratio of g is {:.4}", lip_g.ratio),
    );
    report.push(
        "dissipativity",
        p.beta1 > 0.0 && diss.ratio == 0.0,
        if p.beta1 > 0.0 {
            format!(
                "<y,F(x,y)> <= -beta_1|y|^2 + beta_2 with beta_1 = {}, beta_2 = {}: {}",
                short(p.beta1),
                short(p.beta2),
                if diss.ratio == 0.0 { "no sampled violation".to_string() } else { format!("violated at box scale {}", diss.at) }
            )
        } else {
            format!("beta_1 = {} must be positive", short(p.beta1))
        },
    );
    report.push(
        "monotonicity",
        mono.ratio == 0.0,
        format!(
            "<dy,F(x,y1)-F(x,y2)> <= beta_3|dy|^2 with beta_3 = {}: {}",
            short(p.beta3),
            if mono.ratio == 0.0 { "no sampled violation".to_string() } else { format!("violated at box scale {}", mono.at) }
        ),
    );
    report.push(
        "eta-gap",
        eta > 0.0,
        format!(
            "eta = 2*lambda_1 - 2*beta_3 - C_2 = 2*{l1:.6} - 2*({}) - {} = {eta:.6}{}",
            short(p.beta3),
            short(p.c2),
            if eta > 0.0 { " > 0" } else { " must be positive" }
        ),
    );
    report.push(
        "kappa-gap",
        kappa > 0.0,
        format!(
            "kappa = 2*lambda_1 + 2*beta_1 - C_3 = 2*{l1:.6} + 2*{} - {} = {kappa:.6}{}",
            short(p.beta1),
            short(p.c3),
            if kappa > 0.0 { " > 0" } else { " must be positive" }
        ),
    );

    let bounded_probe = |radius: f64, rng: &mut StreamRng, which: bool| -> f64 {
        let mut sup = 0.0f64;
        let (mut a, mut b) = (vec![T::zero(); m], vec![T::zero(); m]);
        for _ in 0..samples.max(16) {
            let x = draw(radius, rng);
            let y = draw(radius, rng);
            let v = if which {
                system.slow_drift(&x, &y, &mut a);
                norm(&a).to_f64_lossy()
            } else {
                system.fast_drift(&x, &y, &mut a);
                system.fast_noise(&x, &y, &mut b);
                norm(&a).to_f64_lossy() + norm(&b).to_f64_lossy()
            };
            sup = sup.max(v);
        }
        sup
    };
    let mut probe_rng = substream(seed, Domain::Probe, 2);
    let bounded = |which: bool, rng: &mut StreamRng| {
        let near = bounded_probe(1e2, rng, which);
        let far = bounded_probe(1e4, rng, which);
        (far <= SLACK * near + 1e-12, near, far)
    };

    if p.bounded_fast {
        let (ok, near, far) = bounded(false, &mut probe_rng);
        report.push(
            "bounded-fast",
            ok,
            format!("sup |F|+|G| on boxes of radius 1e2 and 1e4: {near:.4} and {far:.4}"),
        );
        report.push(
            "growth-threshold",
            true,
            format!("skipped: F and G declared bounded (C_3 = {}, threshold {threshold:.6})", short(p.c3)),
        );
    } else {
        report.push(
            "growth-threshold",
            p.c3 < threshold,
            format!(
                "C_3 = {} {} 2*lambda_1^2/(2+lambda_1) = {threshold:.6}",
                short(p.c3),
                if p.c3 < threshold { "<" } else { "must be below" }
            ),
        );
    }
    let (ok, near, far) = bounded(true, &mut probe_rng);
    report.push(
        "bounded-slow-drift",
        ok,
        format!("sup |b| on boxes of radius 1e2 and 1e4: {near:.4} and {far:.4}"),
    );
    report
}

fn default_max_substeps() -> usize {
    100_000
}

/// Two-scale experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct FastSlowConfig<T> {
    pub epsilon: T,
    /// Khasminskii block length; defaults to `ε √(−ln ε)`.
    #[serde(default)]
    pub delta: Option<T>,
    pub horizon: T,
    pub operator: SpectralOperator<T>,
    pub exponents: FracExponents<T>,
    pub system: LinearTestSystem<T>,
    /// Declared constants; derived from `system` when absent.
    #[serde(default)]
    pub params: Option<DissipativityParams>,
    pub x0: Vec<T>,
    pub y0: Vec<T>,
    pub noise: QfbmSpec<T>,
    pub slow_dt: T,
    /// Fast sub-steps per slow step; defaults to `⌈10/ε⌉`.
    #[serde(default)]
    pub substeps: Option<usize>,
    #[serde(default = "default_max_substeps")]
    pub max_substeps: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl<T: Scalar> FastSlowConfig<T> {
    /// The averaging experiment on `modes` Dirichlet modes of `[0, 1]`.
    pub fn canonical(epsilon: T, modes: usize, replicates: usize, seed: u64) -> Result<Self> {
        let hurst = T::lit(0.7);
        Ok(Self {
            epsilon,
            delta: None,
            horizon: T::one(),
            operator: crate::semigroup::dirichlet_laplacian(modes, T::one())?,
            exponents: FracExponents::defaults(hurst),
            system: LinearTestSystem::canonical(),
            params: None,
            x0: vec![T::lit(0.5); modes],
            y0: vec![T::zero(); modes],
            noise: QfbmSpec::new(hurst, T::lit(3.0), modes)?,
            slow_dt: T::lit(1.0 / 128.0),
            substeps: None,
            max_substeps: default_max_substeps(),
            replicates,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let one = T::one();
        if !(self.epsilon > T::zero() && self.epsilon < one) {
            return Err(param(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        let delta = self.delta();
        if !(delta > self.epsilon && delta < one) {
            return Err(param(format!(
                "delta must lie in (epsilon, 1) = ({}, 1), got {delta}",
                self.epsilon
            )));
        }
        SpectralOperator::new(self.operator.eigenvalues().to_vec(), self.operator.label())?;
        self.system.validate()?;
        let m = self.operator.modes();
        for (name, v) in [("x0", &self.x0), ("y0", &self.y0)] {
            if v.len() != m {
                return Err(param(format!("{name} has {} modes, operator has {m}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(param(format!("{name} must be finite")));
            }
        }
        if self.noise.modes > m {
            return Err(param(format!(
                "fBm has {} modes but the Galerkin space only {m}",
                self.noise.modes
            )));
        }
        self.noise.validate()?;
        self.exponents.validate(self.noise.hurst)?;
        if !(self.exponents.beta > self.exponents.alpha) {
            return Err(param("initial data exponent beta must exceed alpha"));
        }
        if self.replicates == 0 {
            return Err(param("replicates must be at least 1"));
        }
        self.slow_steps()?;
        self.substeps()?;
        Ok(())
    }

    pub fn delta(&self) -> T {
        self.delta.unwrap_or_else(|| default_delta(self.epsilon))
    }

    pub fn slow_steps(&self) -> Result<usize> {
        integer_ratio(self.horizon, self.slow_dt, "horizon", "slow_dt")
    }

    /// Fast sub-steps per slow step, at least `⌈10/ε⌉`.
    pub fn substeps(&self) -> Result<usize> {
        let need = (T::lit(10.0) / self.epsilon).ceil().to_f64_lossy() as usize;
        let n = self.substeps.unwrap_or(need);
        if n == 0 {
            return Err(param("substeps must be positive"));
        }
        if n > self.max_substeps {
            return Err(Error::Resolution(format!(
                "epsilon = {} needs {n} fast sub-steps per slow step, above the cap {}",
                self.epsilon, self.max_substeps
            )));
        }
        Ok(n)
    }

    /// Slow steps per Khasminskii block; `δ` must be a multiple of the slow step.
    pub fn block_stride(&self) -> Result<usize> {
        integer_ratio(self.delta(), self.slow_dt, "delta", "slow_dt")
    }

    /// Copy with `δ` rounded to the nearest positive multiple of the slow step.
    pub fn with_snapped_delta(&self) -> Self {
        let k = (self.delta() / self.slow_dt).round().max(T::one());
        Self {
            delta: Some(k * self.slow_dt),
            ..self.clone()
        }
    }

    /// Copy at a different `ε` with the default block length.
    pub fn with_epsilon(&self, epsilon: T) -> Self {
        Self {
            epsilon,
            delta: None,
            ..self.clone()
        }
    }

    pub fn grid(&self) -> Result<Grid<T>> {
        Grid::uniform(self.horizon, self.slow_steps()? + 1)
    }

    pub fn params(&self) -> Result<DissipativityParams> {
        match self.params {
            Some(p) => Ok(p),
            None => self.system.derived_params(self.operator.modes()),
        }
    }

    /// Seed of replicate `r`.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        child_seed(self.seed, r as u64)
    }
}

/// `ε √(−ln ε)`.
pub fn default_delta<T: Scalar>(epsilon: T) -> T {
    epsilon * (-epsilon.ln()).sqrt()
}

fn integer_ratio<T: Scalar>(num: T, den: T, a: &str, b: &str) -> Result<usize> {
    if !(num > T::zero() && den > T::zero()) {
        return Err(param(format!("{a} and {b} must be positive")));
    }
    let ratio = (num / den).to_f64_lossy();
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-6 * n.max(1.0) {
        return Err(param(format!("{a} = {num} is not an integer multiple of {b} = {den}")));
    }
    Ok(n as usize)
}

/// Slow and fast paths of one two-scale run, with the auxiliary pair when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct FastSlowRun<T> {
    pub x: Path<T>,
    pub y: Path<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KhasminskiiRun<T> {
    pub x: Path<T>,
    pub y: Path<T>,
    pub x_hat: Path<T>,
    pub y_hat: Path<T>,
    /// Slow-grid indices of the block starts.
    pub breakpoints: Vec<usize>,
    /// `∫ |Y − Ŷ|²` over each block (left sums on the fast grid).
    pub block_errors: Vec<T>,
}

struct Coupled<T> {
    x: Vec<T>,
    y: Vec<T>,
    aux: Option<(Vec<T>, Vec<T>, Vec<T>)>,
}

/// Exponential-Euler stepping of the coupled system. The fast equation is
/// sub-stepped inside each slow step with `X` frozen at the left point. With
/// `stride`, the auxiliary pair `(X̂, Ŷ)` is advanced on the same increments.
fn run_coupled<T: Scalar, S: FastSlowSystem<T>>(
    cfg: &FastSlowConfig<T>,
    system: &S,
    fbm: &Path<T>,
    seed: u64,
    stride: Option<usize>,
) -> Result<Coupled<T>> {
    let m = cfg.operator.modes();
    let nm = cfg.noise.modes;
    let steps = cfg.slow_steps()?;
    let ns = cfg.substeps()?;
    let dt = cfg.slow_dt;
    let h = dt / T::from_usize_lossy(ns);
    let eig = cfg.operator.eigenvalues();
    let slow = StepFactors::new(eig, dt);
    let sub = StepFactors::new(eig, h);
    let fast = StepFactors::new(eig, h / cfg.epsilon);
    let kick_scale = (h / cfg.epsilon).sqrt();
    if fbm.len() != steps + 1 || fbm.dim() != nm {
        return Err(Error::GridMismatch(format!(
            "fBm path has {} points of dimension {}, expected {} of dimension {nm}",
            fbm.len(),
            fbm.dim(),
            steps + 1
        )));
    }
    let db = increments(fbm);
    let mut rngs: Vec<StreamRng> = (0..m)
        .map(|k| substream(seed, Domain::FastWiener, k as u64))
        .collect();

    let mut x = cfg.x0.clone();
    let mut y = cfg.y0.clone();
    let mut xs = Vec::with_capacity((steps + 1) * m);
    let mut ys = Vec::with_capacity((steps + 1) * m);
    xs.extend_from_slice(&x);
    ys.extend_from_slice(&y);
    let z = || vec![T::zero(); m];
    let (mut bx, mut fy, mut gy, mut acc, mut gx) = (z(), z(), z(), z(), z());
    let (mut bh, mut fh, mut gh, mut acc_h) = (z(), z(), z(), z());
    let mut xh = x.clone();
    let mut yh = y.clone();
    let mut frozen = x.clone();
    let mut xhs = Vec::new();
    let mut yhs = Vec::new();
    let mut blocks = Vec::new();
    let mut noise = z();
    if stride.is_some() {
        xhs.extend_from_slice(&xh);
        yhs.extend_from_slice(&yh);
        blocks.push(T::zero());
    }

    for j in 0..steps {
        acc.fill(T::zero());
        acc_h.fill(T::zero());
        for _ in 0..ns {
            system.slow_drift(&x, &y, &mut bx);
            system.fast_drift(&x, &y, &mut fy);
            system.fast_noise(&x, &y, &mut gy);
            for (n, rng) in noise.iter_mut().zip(rngs.iter_mut()) {
                *n = kick_scale * T::standard_normal(rng);
            }
            if stride.is_some() {
                system.slow_drift(&frozen, &yh, &mut bh);
                system.fast_drift(&frozen, &yh, &mut fh);
                system.fast_noise(&frozen, &yh, &mut gh);
                let d = distance(&y, &yh);
                let last = blocks.len() - 1;
                blocks[last] = blocks[last] + h * d * d;
                for k in 0..m {
                    acc_h[k] = sub.decay[k] * acc_h[k] + sub.drift[k] * bh[k];
                    yh[k] = fast.decay[k] * (yh[k] + gh[k] * noise[k]) + fast.drift[k] * fh[k];
                }
            }
            for k in 0..m {
                acc[k] = sub.decay[k] * acc[k] + sub.drift[k] * bx[k];
                y[k] = fast.decay[k] * (y[k] + gy[k] * noise[k]) + fast.drift[k] * fy[k];
            }
        }
        system.slow_noise(&x, &mut gx);
        for k in 0..m {
            let kick = if k < nm { gx[k] * db[j * nm + k] } else { T::zero() };
            x[k] = slow.decay[k] * (x[k] + kick) + acc[k];
            if stride.is_some() {
                xh[k] = slow.decay[k] * (xh[k] + kick) + acc_h[k];
            }
        }
        if x.iter().chain(&y).chain(&xh).chain(&yh).any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: j + 1,
                time: (T::from_usize_lossy(j + 1) * dt).to_f64_lossy(),
            });
        }
        xs.extend_from_slice(&x);
        ys.extend_from_slice(&y);
        if let Some(stride) = stride {
            if (j + 1) % stride == 0 && j + 1 < steps {
                yh.copy_from_slice(&y);
                frozen.copy_from_slice(&x);
                blocks.push(T::zero());
            }
            xhs.extend_from_slice(&xh);
            yhs.extend_from_slice(&yh);
        }
    }
    Ok(Coupled {
        x: xs,
        y: ys,
        aux: stride.map(|_| (xhs, yhs, blocks)),
    })
}

fn grid_times<T: Scalar>(cfg: &FastSlowConfig<T>) -> Result<Vec<T>> {
    Ok(cfg.grid()?.into_times())
}

/// One two-scale run with replicate seed `seed` (fBm and fast Wiener streams).
pub fn solve_fastslow<T: Scalar>(cfg: &FastSlowConfig<T>, seed: u64) -> Result<(Path<T>, Path<T>)> {
    cfg.validate()?;
    let fbm = QfbmSampler::new(cfg.noise, &cfg.grid()?)?.sample(seed);
    let run = solve_fastslow_with(cfg, &fbm, seed)?;
    Ok((run.x, run.y))
}

/// Two-scale run on a given fBm path; fast noise comes from `seed`.
pub fn solve_fastslow_with<T: Scalar>(
    cfg: &FastSlowConfig<T>,
    fbm: &Path<T>,
    seed: u64,
) -> Result<FastSlowRun<T>> {
    let c = run_coupled(cfg, &cfg.system, fbm, seed, None)?;
    let times = grid_times(cfg)?;
    let m = cfg.operator.modes();
    Ok(FastSlowRun {
        x: Path::hilbert(times.clone(), m, c.x)?,
        y: Path::hilbert(times, m, c.y)?,
    })
}

/// Two-scale run together with the block-reset auxiliary processes, all on the
/// same noise. `δ` must be a multiple of the slow step.
pub fn khasminskii_auxiliary<T: Scalar>(cfg: &FastSlowConfig<T>, seed: u64) -> Result<KhasminskiiRun<T>> {
    cfg.validate()?;
    let stride = cfg.block_stride()?;
    let fbm = QfbmSampler::new(cfg.noise, &cfg.grid()?)?.sample(seed);
    let c = run_coupled(cfg, &cfg.system, &fbm, seed, Some(stride))?;
    let times = grid_times(cfg)?;
    let m = cfg.operator.modes();
    let steps = times.len() - 1;
    let (xh, yh, blocks) = c.aux.expect("auxiliary requested");
    Ok(KhasminskiiRun {
        x: Path::hilbert(times.clone(), m, c.x)?,
        y: Path::hilbert(times.clone(), m, c.y)?,
        x_hat: Path::hilbert(times.clone(), m, xh)?,
        y_hat: Path::hilbert(times, m, yh)?,
        breakpoints: (0..steps).step_by(stride).collect(),
        block_errors: blocks,
    })
}

/// Source of the averaged drift `b̄`.
#[derive(Debug, Clone, PartialEq)]
pub enum BbarProvider<T> {
    /// Closed form, one componentwise map per mode.
    Analytic(Vec<SineAffine<T>>),
    Table(BbarTable<T>),
}

impl<T: Scalar> BbarProvider<T> {
    pub fn analytic(system: &LinearTestSystem<T>, op: &SpectralOperator<T>) -> Result<Self> {
        Ok(Self::Analytic(system.analytic_bbar(op)?))
    }

    /// Evaluates `b̄(x)`; returns the offending coordinate when outside a table.
    pub fn eval(&self, x: &[T], out: &mut [T]) -> std::result::Result<(), T> {
        match self {
            Self::Analytic(maps) => {
                for ((o, &xk), map) in out.iter_mut().zip(x).zip(maps) {
                    *o = map.eval(xk);
                }
                Ok(())
            }
            Self::Table(t) => t.eval(x, out),
        }
    }
}

/// Tabulated `b̄` for systems whose averaged drift in mode `k` depends on `x_k` only.
#[derive(Debug, Clone, PartialEq)]
pub struct BbarTable<T> {
    pub lo: T,
    pub hi: T,
    /// `values[k][i]` is `b̄_k` at node `i` of the uniform grid on `[lo, hi]`.
    pub values: Vec<Vec<T>>,
    pub stderr: Vec<Vec<T>>,
}

impl<T: Scalar> BbarTable<T> {
    /// Estimates `b̄` at `nodes` equally spaced diagonal states `x = (v, …, v)`.
    pub fn estimate<S: FastSlowSystem<T>>(
        system: &S,
        op: &SpectralOperator<T>,
        params: &DissipativityParams,
        lo: T,
        hi: T,
        nodes: usize,
        budget: &InvariantBudget<T>,
    ) -> Result<Self> {
        if nodes < 2 || !(hi > lo) {
            return Err(param("averaged-drift table needs hi > lo and at least 2 nodes"));
        }
        let m = op.modes();
        let mut values = vec![Vec::with_capacity(nodes); m];
        let mut stderr = vec![Vec::with_capacity(nodes); m];
        for i in 0..nodes {
            let v = lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(nodes - 1);
            let node_budget = InvariantBudget {
                seed: child_seed(budget.seed, i as u64),
                ..budget.clone()
            };
            let est = estimate_invariant_drift(system, op, params, &vec![v; m], &node_budget)?;
            for k in 0..m {
                values[k].push(est.drift[k]);
                stderr[k].push(est.stderr[k]);
            }
        }
        Ok(Self {
            lo,
            hi,
            values,
            stderr,
        })
    }

    pub fn eval(&self, x: &[T], out: &mut [T]) -> std::result::Result<(), T> {
        for (k, (o, &xk)) in out.iter_mut().zip(x).enumerate() {
            if !(xk >= self.lo && xk <= self.hi) {
                return Err(xk);
            }
            let row = &self.values[k];
            let n = row.len() - 1;
            let pos = (xk - self.lo) / (self.hi - self.lo) * T::from_usize_lossy(n);
            let i = (pos.floor().to_f64_lossy() as usize).min(n - 1);
            let w = pos - T::from_usize_lossy(i);
            *o = row[i] + w * (row[i + 1] - row[i]);
        }
        Ok(())
    }
}

/// Averaged slow equation `dX̄ = (AX̄ + b̄(X̄))dt + g(X̄)dB^H` on the slow grid,
/// through the same stepping code as [`crate::spde::solve_mild`].
pub fn solve_averaged<T: Scalar>(
    cfg: &FastSlowConfig<T>,
    bbar: &BbarProvider<T>,
    fbm: &Path<T>,
) -> Result<Path<T>> {
    let times = grid_times(cfg)?;
    if fbm.len() != times.len() || fbm.dim() != cfg.noise.modes {
        return Err(Error::GridMismatch("fBm path does not match the slow grid".into()));
    }
    let outside = Cell::new(None);
    let drift = |x: &[T], out: &mut [T]| {
        if let Err(v) = bbar.eval(x, out) {
            outside.set(Some(v));
            out.fill(T::zero());
        }
    };
    let sys = &cfg.system;
    let gmap = |x: &[T], out: &mut [T]| sys.slow_noise(x, out);
    let g: Option<CoefficientFn<T>> = (!sys.g.is_zero()).then_some(&gmap as CoefficientFn<T>);
    let db = increments(fbm);
    let path = integrate(
        &cfg.operator,
        &drift,
        None,
        g,
        &cfg.x0,
        &times,
        None,
        &db,
        cfg.noise.modes,
        None,
    );
    if let Some(v) = outside.get() {
        if let BbarProvider::Table(t) = bbar {
            return Err(param(format!(
                "averaged-drift table covers [{}, {}] but the state reached {v}",
                t.lo, t.hi
            )));
        }
    }
    path
}

/// Paired `X^ε` / `X̄` runs sharing one fBm sample per replicate.
pub struct AveragingExperiment<T: Scalar> {
    cfg: FastSlowConfig<T>,
    bbar: BbarProvider<T>,
    sampler: QfbmSampler<T>,
}

impl<T: Scalar> AveragingExperiment<T> {
    pub fn new(cfg: FastSlowConfig<T>, bbar: BbarProvider<T>) -> Result<Self> {
        cfg.validate()?;
        let sampler = QfbmSampler::new(cfg.noise, &cfg.grid()?)?;
        Ok(Self { cfg, bbar, sampler })
    }

    pub fn config(&self) -> &FastSlowConfig<T> {
        &self.cfg
    }

    /// Both slow paths of replicate `r`.
    pub fn paths(&self, r: usize) -> Result<(Path<T>, Path<T>)> {
        let seed = self.cfg.replicate_seed(r);
        let fbm = self.sampler.sample(seed);
        let run = solve_fastslow_with(&self.cfg, &fbm, seed)?;
        let avg = solve_averaged(&self.cfg, &self.bbar, &fbm)?;
        Ok((run.x, avg))
    }

    /// `‖X^ε − X̄‖²_{α,T}` for replicate `r`.
    pub fn replicate(&self, r: usize) -> Result<T> {
        let (x, avg) = self.paths(r)?;
        let n = balpha2_norm(&x.sub(&avg)?, self.cfg.exponents.alpha, self.cfg.horizon)?;
        Ok(n * n)
    }

    /// Sequential ensemble estimate over `cfg.replicates`.
    pub fn run(&self) -> Result<MeanEstimate<T>> {
        let errs = (0..self.cfg.replicates)
            .map(|r| self.replicate(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_estimate(&errs))
    }
}

/// Monte Carlo estimate of `E‖X^ε − X̄‖²_{α,T}`.
pub fn averaging_error<T: Scalar>(cfg: &FastSlowConfig<T>, bbar: &BbarProvider<T>) -> Result<MeanEstimate<T>> {
    AveragingExperiment::new(cfg.clone(), bbar.clone())?.run()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow<T> {
    pub eps: T,
    pub delta: T,
    pub error: T,
    pub stderr: T,
    pub n_rep: usize,
    pub seed: u64,
}

/// Checks that `eps` is strictly decreasing with at least three entries.
pub fn check_eps_list<T: Scalar>(eps: &[T]) -> Result<()> {
    if eps.len() < 3 {
        return Err(param("epsilon list needs at least 3 entries"));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(param("epsilon list must be strictly decreasing"));
    }
    Ok(())
}

/// Averaging error for each `ε`, with `δ = ε √(−ln ε)` and the analytic `b̄`.
pub fn averaging_study<T: Scalar>(base: &FastSlowConfig<T>, eps: &[T]) -> Result<Vec<StudyRow<T>>> {
    check_eps_list(eps)?;
    let bbar = BbarProvider::analytic(&base.system, &base.operator)?;
    eps.iter()
        .map(|&e| {
            let cfg = base.with_epsilon(e);
            let est = averaging_error(&cfg, &bbar)?;
            Ok(StudyRow {
                eps: e,
                delta: cfg.delta(),
                error: est.mean,
                stderr: est.stderr,
                n_rep: est.count,
                seed: cfg.seed,
            })
        })
        .collect()
}

/// Frozen fast equation at unit time scale, one Wiener stream per mode.
struct Frozen<'a, T: Scalar, S> {
    system: &'a S,
    x: &'a [T],
    factors: StepFactors<T>,
    sqrt_dt: T,
    f: Vec<T>,
    g: Vec<T>,
}

impl<'a, T: Scalar, S: FastSlowSystem<T>> Frozen<'a, T, S> {
    fn new(system: &'a S, op: &SpectralOperator<T>, x: &'a [T], dt: T) -> Self {
        let m = op.modes();
        Self {
            system,
            x,
            factors: StepFactors::new(op.eigenvalues(), dt),
            sqrt_dt: dt.sqrt(),
            f: vec![T::zero(); m],
            g: vec![T::zero(); m],
        }
    }

    fn draw(&self, rngs: &mut [StreamRng], noise: &mut [T]) {
        for (n, rng) in noise.iter_mut().zip(rngs.iter_mut()) {
            *n = self.sqrt_dt * T::standard_normal(rng);
        }
    }

    fn step(&mut self, y: &mut [T], noise: &[T]) {
        self.system.fast_drift(self.x, y, &mut self.f);
        self.system.fast_noise(self.x, y, &mut self.g);
        for k in 0..y.len() {
            y[k] = self.factors.decay[k] * (y[k] + self.g[k] * noise[k]) + self.factors.drift[k] * self.f[k];
        }
    }
}

fn wiener_streams(seed: u64, m: usize) -> Vec<StreamRng> {
    (0..m).map(|k| substream(seed, Domain::Wiener, k as u64)).collect()
}

fn check_frozen<T: Scalar>(op: &SpectralOperator<T>, x: &[T], y0: &[T], horizon: T, dt: T) -> Result<usize> {
    let m = op.modes();
    if x.len() != m || y0.len() != m {
        return Err(param(format!("frozen state and initial value need {m} modes")));
    }
    integer_ratio(horizon, dt, "horizon", "dt")
}

/// Frozen equation `dY = (AY + F(x, Y))dt + G(x, Y)dW` from `y0`.
pub fn solve_frozen<T: Scalar, S: FastSlowSystem<T>>(
    system: &S,
    op: &SpectralOperator<T>,
    x: &[T],
    y0: &[T],
    horizon: T,
    dt: T,
    seed: u64,
) -> Result<Path<T>> {
    let steps = check_frozen(op, x, y0, horizon, dt)?;
    let m = op.modes();
    let mut fr = Frozen::new(system, op, x, dt);
    let mut rngs = wiener_streams(seed, m);
    let mut y = y0.to_vec();
    let mut noise = vec![T::zero(); m];
    let mut values = Vec::with_capacity((steps + 1) * m);
    values.extend_from_slice(&y);
    for j in 0..steps {
        fr.draw(&mut rngs, &mut noise);
        fr.step(&mut y, &noise);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                step: j + 1,
                time: (T::from_usize_lossy(j + 1) * dt).to_f64_lossy(),
            });
        }
        values.extend_from_slice(&y);
    }
    Path::hilbert(Grid::uniform(horizon, steps + 1)?.into_times(), m, values)
}

/// `E|Y^{x,z}_t − Y^{x,z'}_t|²` from synchronously coupled frozen runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingCurve<T> {
    pub times: Vec<T>,
    pub mean: Vec<T>,
    pub stderr: Vec<T>,
    /// `|z − z'|² e^{−ηt}`.
    pub bound: Vec<T>,
    pub eta: T,
}

impl<T: Scalar> CouplingCurve<T> {
    /// Largest `mean / (bound (1 + 3 SE/mean))` over `t > 0`; at most 1 when the
    /// curve stays below. At `t = 0` both sides equal `|z − z'|²`.
    pub fn worst_ratio(&self) -> T {
        let three = T::lit(3.0);
        self.mean
            .iter()
            .zip(&self.stderr)
            .zip(&self.bound)
            .skip(1)
            .map(|((&m, &s), &b)| {
                if m == T::zero() {
                    T::zero()
                } else {
                    m / (b * (T::one() + three * s / m))
                }
            })
            .fold(T::zero(), T::max)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn frozen_coupling<T: Scalar, S: FastSlowSystem<T>>(
    system: &S,
    op: &SpectralOperator<T>,
    params: &DissipativityParams,
    x: &[T],
    z: &[T],
    z2: &[T],
    horizon: T,
    dt: T,
    couples: usize,
    seed: u64,
) -> Result<CouplingCurve<T>> {
    let steps = check_frozen(op, x, z, horizon, dt)?;
    check_frozen(op, x, z2, horizon, dt)?;
    if couples < 2 {
        return Err(param("coupling curve needs at least 2 couples"));
    }
    let m = op.modes();
    let eta = T::lit(params.eta(op.first().to_f64_lossy()));
    let mut samples = vec![T::zero(); (steps + 1) * couples];
    let mut fa = Frozen::new(system, op, x, dt);
    let mut fb = Frozen::new(system, op, x, dt);
    let mut noise = vec![T::zero(); m];
    for c in 0..couples {
        let mut rngs = wiener_streams(child_seed(seed, c as u64), m);
        let mut a = z.to_vec();
        let mut b = z2.to_vec();
        let d = distance(&a, &b);
        samples[c] = d * d;
        for j in 1..=steps {
            fa.draw(&mut rngs, &mut noise);
            fa.step(&mut a, &noise);
            fb.step(&mut b, &noise);
            let d = distance(&a, &b);
            samples[j * couples + c] = d * d;
        }
    }
    let d0 = distance(z, z2);
    let times = Grid::uniform(horizon, steps + 1)?.into_times();
    let mut mean = Vec::with_capacity(steps + 1);
    let mut stderr = Vec::with_capacity(steps + 1);
    for row in samples.chunks_exact(couples) {
        let e = mean_estimate(row);
        mean.push(e.mean);
        stderr.push(e.stderr);
    }
    let bound = times.iter().map(|&t| d0 * d0 * (-eta * t).exp()).collect();
    Ok(CouplingCurve {
        times,
        mean,
        stderr,
        bound,
        eta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvariantMethod {
    #[default]
    TimeAverage,
    Ensemble,
}

/// Work allowed for one `b̄(x)` estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct InvariantBudget<T> {
    #[serde(default)]
    pub method: InvariantMethod,
    /// Defaults to `5/η`; shorter values are rejected.
    #[serde(default)]
    pub burn_in: Option<T>,
    /// Averaging window (time average) after burn-in.
    pub horizon: T,
    pub dt: T,
    /// Chains for the ensemble method.
    #[serde(default)]
    pub chains: usize,
    /// Batches for the batch-means standard error.
    #[serde(default)]
    pub batches: usize,
    /// Required `SE ≤ tol · |b̄_k|` in every mode.
    pub rel_tolerance: T,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantMeasureEstimate<T> {
    pub x: Vec<T>,
    pub drift: Vec<T>,
    pub stderr: Vec<T>,
    pub burn_in: T,
    pub horizon: T,
    pub method: InvariantMethod,
}

impl<T: Scalar> InvariantMeasureEstimate<T> {
    pub fn variance(&self) -> Vec<T> {
        self.stderr.iter().map(|s| *s * *s).collect()
    }
}

/// `b̄(x) = ∫ b(x, z) μ^x(dz)` by a long time average after burn-in, or by an
/// ensemble of independent chains observed once after burn-in.
pub fn estimate_invariant_drift<T: Scalar, S: FastSlowSystem<T>>(
    system: &S,
    op: &SpectralOperator<T>,
    params: &DissipativityParams,
    x: &[T],
    budget: &InvariantBudget<T>,
) -> Result<InvariantMeasureEstimate<T>> {
    let m = op.modes();
    let eta = params.eta(op.first().to_f64_lossy());
    if !(eta > 0.0) {
        return Err(Error::Condition(format!("eta = {eta} must be positive for mixing")));
    }
    let min_burn = T::lit(5.0 / eta);
    let burn_in = budget.burn_in.unwrap_or(min_burn);
    if burn_in < min_burn * T::lit(1.0 - 1e-12) {
        return Err(param(format!("burn-in {burn_in} is shorter than 5/eta = {min_burn}")));
    }
    let burn_steps = (burn_in / budget.dt).ceil().to_f64_lossy() as usize;
    let y0 = vec![T::zero(); m];
    check_frozen(op, x, &y0, budget.dt, budget.dt)?;
    let mut fr = Frozen::new(system, op, x, budget.dt);
    let mut noise = vec![T::zero(); m];
    let mut b = vec![T::zero(); m];
    let (drift, stderr) = match budget.method {
        InvariantMethod::TimeAverage => {
            let batches = if budget.batches == 0 { 64 } else { budget.batches };
            let total = (budget.horizon / budget.dt).round().to_f64_lossy() as usize;
            let len = total / batches;
            if len == 0 {
                return Err(param("averaging horizon shorter than one batch"));
            }
            let mut rngs = wiener_streams(budget.seed, m);
            let mut y = y0;
            for _ in 0..burn_steps {
                fr.draw(&mut rngs, &mut noise);
                fr.step(&mut y, &noise);
            }
            let mut means = vec![Vec::with_capacity(batches); m];
            let mut sums = vec![T::zero(); m];
            for _ in 0..batches {
                sums.fill(T::zero());
                for _ in 0..len {
                    system.slow_drift(x, &y, &mut b);
                    for k in 0..m {
                        sums[k] = sums[k] + b[k];
                    }
                    fr.draw(&mut rngs, &mut noise);
                    fr.step(&mut y, &noise);
                }
                for k in 0..m {
                    means[k].push(sums[k] / T::from_usize_lossy(len));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::BlowUp { step: 0, time: f64::NAN });
                }
            }
            split(means.iter().map(|v| mean_estimate(v)))
        }
        InvariantMethod::Ensemble => {
            let chains = budget.chains.max(2);
            let mut obs = vec![Vec::with_capacity(chains); m];
            for c in 0..chains {
                let mut rngs = wiener_streams(child_seed(budget.seed, c as u64), m);
                let mut y = y0.clone();
                for _ in 0..burn_steps {
                    fr.draw(&mut rngs, &mut noise);
                    fr.step(&mut y, &noise);
                }
                system.slow_drift(x, &y, &mut b);
                for k in 0..m {
                    obs[k].push(b[k]);
                }
            }
            split(obs.iter().map(|v| mean_estimate(v)))
        }
    };
    for k in 0..m {
        let target = budget.rel_tolerance * drift[k].abs();
        if stderr[k] > target || !stderr[k].is_finite() {
            return Err(Error::Budget {
                achieved: stderr[k].to_f64_lossy(),
                target: target.to_f64_lossy(),
            });
        }
    }
    Ok(InvariantMeasureEstimate {
        x: x.to_vec(),
        drift,
        stderr,
        burn_in,
        horizon: budget.horizon,
        method: budget.method,
    })
}

fn split<T: Scalar>(it: impl Iterator<Item = MeanEstimate<T>>) -> (Vec<T>, Vec<T>) {
    it.map(|e| (e.mean, e.stderr)).unzip()
}

/// Closed-form `b̄(x)` for the linear test system.
pub fn analytic_bbar_linear<T: Scalar>(
    system: &LinearTestSystem<T>,
    op: &SpectralOperator<T>,
    x: &[T],
) -> Result<Vec<T>> {
    if x.len() != op.modes() {
        return Err(param(format!("state has {} modes, operator has {}", x.len(), op.modes())));
    }
    let maps = system.analytic_bbar(op)?;
    Ok(x.iter().zip(&maps).map(|(&xk, m)| m.eval(xk)).collect())
}

/// Normalised autocorrelation of `b(x, Y_t) − b̄` along one stationary frozen run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecorrelationPoint<T> {
    pub lag: T,
    pub correlation: T,
    /// `e^{−η·lag/2}`.
    pub envelope: T,
}

#[allow(clippy::too_many_arguments)]
pub fn decorrelation_profile<T: Scalar, S: FastSlowSystem<T>>(
    system: &S,
    op: &SpectralOperator<T>,
    params: &DissipativityParams,
    x: &[T],
    dt: T,
    horizon: T,
    lags: &[usize],
    seed: u64,
) -> Result<Vec<DecorrelationPoint<T>>> {
    let eta = params.eta(op.first().to_f64_lossy());
    let m = op.modes();
    // burn-in of at least 5/η and the window, both in whole steps
    let start = (5.0 / eta.max(f64::MIN_POSITIVE) / dt.to_f64_lossy()).ceil() as usize;
    let window = (horizon / dt).round().to_f64_lossy() as usize;
    let y0 = vec![T::zero(); m];
    let total = T::from_usize_lossy(start + window) * dt;
    let path = solve_frozen(system, op, x, &y0, total, dt, seed)?;
    let n = path.len() - start;
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if max_lag + 2 > n {
        return Err(param("largest lag exceeds the stationary window"));
    }
    let mut obs = vec![T::zero(); n * m];
    for i in 0..n {
        system.slow_drift(x, path.value(start + i), &mut obs[i * m..(i + 1) * m]);
    }
    let means: Vec<T> = (0..m)
        .map(|k| crate::stats::mean(&(0..n).map(|i| obs[i * m + k]).collect::<Vec<_>>()))
        .collect();
    for i in 0..n {
        for k in 0..m {
            obs[i * m + k] = obs[i * m + k] - means[k];
        }
    }
    let cov = |lag: usize| {
        let prods: Vec<T> = (0..n - lag)
            .map(|i| dot(&obs[i * m..(i + 1) * m], &obs[(i + lag) * m..(i + lag + 1) * m]))
            .collect();
        crate::stats::mean(&prods)
    };
    let c0 = cov(0);
    let eta = T::lit(eta);
    Ok(lags
        .iter()
        .map(|&l| {
            let lag = T::from_usize_lossy(l) * dt;
            DecorrelationPoint {
                lag,
                correlation: cov(l) / c0,
                envelope: (-eta * lag / T::lit(2.0)).exp(),
            }
        })
        .collect())
}

/// `E|Y^ε_t|²` on the slow grid over `replicates` two-scale runs.
pub fn fast_second_moment<T: Scalar>(cfg: &FastSlowConfig<T>, replicates: usize) -> Result<Vec<T>> {
    cfg.validate()?;
    let sampler = QfbmSampler::new(cfg.noise, &cfg.grid()?)?;
    let n = cfg.slow_steps()? + 1;
    let mut acc = vec![Vec::with_capacity(replicates); n];
    for r in 0..replicates {
        let seed = cfg.replicate_seed(r);
        let run = solve_fastslow_with(cfg, &sampler.sample(seed), seed)?;
        for (k, a) in acc.iter_mut().enumerate() {
            let v = norm(run.y.value(k));
            a.push(v * v);
        }
    }
    Ok(acc.iter().map(|a| crate::stats::mean(a)).collect())
}

/// `E|X^ε_{t+h} − X^ε_t|²` averaged over `t` and replicates, for each lag `h`
/// given in slow steps. Returns `(h, mean square increment)`.
pub fn slow_increment_moments<T: Scalar>(
    cfg: &FastSlowConfig<T>,
    replicates: usize,
    lags: &[usize],
) -> Result<Vec<(T, T)>> {
    cfg.validate()?;
    let sampler = QfbmSampler::new(cfg.noise, &cfg.grid()?)?;
    let n = cfg.slow_steps()? + 1;
    if lags.iter().any(|&l| l == 0 || l >= n) {
        return Err(param("increment lags must lie in [1, steps]"));
    }
    let mut acc = vec![Vec::with_capacity(replicates); lags.len()];
    for r in 0..replicates {
        let seed = cfg.replicate_seed(r);
        let run = solve_fastslow_with(cfg, &sampler.sample(seed), seed)?;
        for (a, &l) in acc.iter_mut().zip(lags) {
            let sq: Vec<T> = (0..n - l)
                .map(|i| {
                    let d = distance(run.x.value(i + l), run.x.value(i));
                    d * d
                })
                .collect();
            a.push(crate::stats::mean(&sq));
        }
    }
    Ok(lags
        .iter()
        .zip(&acc)
        .map(|(&l, a)| (T::from_usize_lossy(l) * cfg.slow_dt, crate::stats::mean(a)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::dirichlet_laplacian;
    use crate::spde::{solve_mild, CoefficientSet, MildNoise, MildSolveConfig};

    fn canonical(eps: f64) -> FastSlowConfig<f64> {
        FastSlowConfig::canonical(eps, 4, 8, 17).unwrap()
    }

    #[test]
    fn canonical_constants_pass_the_gate() {
        let cfg = canonical(0.1);
        let p = cfg.params().unwrap();
        assert!((p.c3 - 14.08).abs() < 1e-12);
        let report = validate_conditions(&cfg.system, &p, &cfg.operator, 400, 3);
        assert!(report.passed(), "{report}");
        // 2π⁴/(2 + π²)
        assert!((report.threshold - 16.4131).abs() < 1e-3, "{}", report.threshold);
    }

    #[test]
    fn unit_decay_fast_drift_constants() {
        let sys = LinearTestSystem::<f64> {
            fast_decay: 1.0,
            ..LinearTestSystem::canonical()
        };
        let sys = LinearTestSystem {
            fast_offset: 0.0,
            fast_coupling: 0.0,
            ..sys
        };
        let p = sys.derived_params(3).unwrap();
        assert_eq!((p.beta1, p.beta2, p.beta3), (1.0, 0.0, -1.0));
    }

    #[test]
    fn gate_rejects_each_hard_inequality() {
        let op = dirichlet_laplacian::<f64>(2, 1.0).unwrap();
        let sys = LinearTestSystem::canonical();
        let base = sys.derived_params(2).unwrap();
        let l1 = op.first();
        let eta_bad = DissipativityParams { beta3: l1, ..base };
        let r = validate_conditions(&sys, &eta_bad, &op, 64, 1);
        assert!(r.rejection().unwrap().contains("eta = 2*lambda_1 - 2*beta_3 - C_2"));
        let c3_bad = DissipativityParams { c3: 17.0, ..base };
        let r = validate_conditions(&sys, &c3_bad, &op, 64, 1);
        let msg = r.rejection().unwrap();
        assert!(msg.contains("growth-threshold") && msg.contains("16.41"), "{msg}");
    }

    #[test]
    fn zero_coefficients_give_pure_decay() {
        let mut cfg = canonical(0.05);
        cfg.system = LinearTestSystem {
            fast_decay: 0.0,
            fast_sine: 0.0,
            fast_offset: 0.0,
            fast_coupling: 0.0,
            fast_noise: 0.0,
            slow_sine: 0.0,
            slow_fast: 0.0,
            saturation: 50.0,
            g: SineAffine::zero(),
        };
        cfg.x0 = vec![1.0, 0.5, 0.25, 0.125];
        cfg.y0 = vec![1.0, -1.0, 1.0, -1.0];
        cfg.params = Some(DissipativityParams {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
            beta1: 1.0,
            beta2: 0.0,
            beta3: 0.0,
            bounded_fast: false,
        });
        let (x, y) = solve_fastslow(&cfg, 5).unwrap();
        let t = 0.5;
        let k = x.require_index(t).unwrap();
        for (i, &l) in cfg.operator.eigenvalues().iter().enumerate() {
            let ex = cfg.x0[i] * (-l * t).exp();
            let ey = cfg.y0[i] * (-l * t / cfg.epsilon).exp();
            assert!((x.value(k)[i] - ex).abs() <= 1e-12 * ex.abs().max(1e-300) * 200.0);
            assert!((y.value(k)[i] - ey).abs() <= 1e-300 + 1e-10 * ey.abs());
        }
    }

    #[test]
    fn reset_is_exact_and_fast_path_matches_plain_run() {
        let cfg = canonical(0.05).with_snapped_delta();
        let run = khasminskii_auxiliary(&cfg, 9).unwrap();
        for &b in &run.breakpoints {
            assert_eq!(run.y.value(b), run.y_hat.value(b));
        }
        assert!(run.breakpoints.len() > 2);
        let (x, y) = solve_fastslow(&cfg, 9).unwrap();
        assert_eq!(x, run.x);
        assert_eq!(y, run.y);
        let bad = FastSlowConfig {
            delta: Some(cfg.slow_dt * 2.5),
            ..cfg
        };
        assert!(khasminskii_auxiliary(&bad, 9).is_err());
    }

    #[test]
    fn single_block_auxiliary_is_the_frozen_equation() {
        let mut cfg = canonical(0.1);
        cfg.delta = Some(0.5);
        cfg.horizon = 0.25;
        cfg.slow_dt = 1.0 / 64.0;
        let run = khasminskii_auxiliary(&cfg, 4).unwrap();
        assert_eq!(run.breakpoints, vec![0]);
        assert_eq!(run.block_errors.len(), 1);
    }

    #[test]
    fn averaged_solve_matches_mild_solver_bitwise() {
        let mut cfg = canonical(0.1);
        cfg.operator = dirichlet_laplacian(1, 1.0).unwrap();
        cfg.noise = QfbmSpec::new(0.7, 3.0, 1).unwrap();
        cfg.x0 = vec![0.3];
        cfg.y0 = vec![0.0];
        let bbar = BbarProvider::analytic(&cfg.system, &cfg.operator).unwrap();
        let BbarProvider::Analytic(maps) = &bbar else { unreachable!() };
        let grid = cfg.grid().unwrap();
        let fbm = QfbmSampler::new(cfg.noise, &grid).unwrap().sample(11);
        let avg = solve_averaged(&cfg, &bbar, &fbm).unwrap();

        let mild_cfg = MildSolveConfig {
            operator: cfg.operator.clone(),
            exponents: cfg.exponents,
            dt: cfg.slow_dt,
            horizon: cfg.horizon,
            u0: cfg.x0.clone(),
            noise: cfg.noise,
            scheme: Default::default(),
        };
        let coeffs = CoefficientSet::new(maps[0], SineAffine::zero(), cfg.system.g);
        let noise = MildNoise {
            wiener: crate::spde::sample_wiener(&grid, 1, 0, Domain::Wiener).unwrap(),
            fbm,
        };
        let mild = solve_mild(&mild_cfg, &coeffs, &noise).unwrap();
        assert_eq!(avg, mild);
    }

    #[test]
    fn decoupled_slow_drift_gives_vanishing_error() {
        let mut cfg = canonical(0.1);
        cfg.system = cfg.system.decoupled();
        cfg.replicates = 3;
        let bbar = BbarProvider::analytic(&cfg.system, &cfg.operator).unwrap();
        let e = averaging_error(&cfg, &bbar).unwrap();
        assert!(e.mean < 1e-20, "{}", e.mean);
    }

    #[test]
    fn table_provider_rejects_states_outside_its_domain() {
        let cfg = canonical(0.1);
        let maps = cfg.system.analytic_bbar(&cfg.operator).unwrap();
        let table = BbarTable {
            lo: 0.6,
            hi: 2.0,
            values: maps.iter().map(|m| vec![m.eval(0.6), m.eval(2.0)]).collect(),
            stderr: vec![vec![0.0; 2]; 4],
        };
        let fbm = QfbmSampler::new(cfg.noise, &cfg.grid().unwrap()).unwrap().sample(1);
        let err = solve_averaged(&cfg, &BbarProvider::Table(table), &fbm).unwrap_err();
        assert!(err.to_string().contains("table covers"));
    }

    #[test]
    fn y_independent_drift_estimate_is_exact() {
        let sys = LinearTestSystem::<f64>::canonical().decoupled();
        let op = dirichlet_laplacian(2, 1.0).unwrap();
        let p = sys.derived_params(2).unwrap();
        let budget = InvariantBudget {
            method: InvariantMethod::TimeAverage,
            burn_in: None,
            horizon: 2.0,
            dt: 0.01,
            chains: 0,
            batches: 10,
            rel_tolerance: 0.01,
            seed: 3,
        };
        let x = [0.4, -1.0];
        let est = estimate_invariant_drift(&sys, &op, &p, &x, &budget).unwrap();
        let exact = analytic_bbar_linear(&sys, &op, &x).unwrap();
        for k in 0..2 {
            assert!(est.stderr[k] < 1e-15);
            assert!((est.drift[k] - exact[k]).abs() < 1e-15);
        }
        let short = InvariantBudget {
            burn_in: Some(0.01),
            ..budget
        };
        assert!(estimate_invariant_drift(&sys, &op, &p, &x, &short).is_err());
    }

    #[test]
    fn nonlinear_fast_drift_has_no_closed_form() {
        let sys = LinearTestSystem::<f64> {
            fast_sine: 0.2,
            ..LinearTestSystem::canonical()
        };
        let op = dirichlet_laplacian(2, 1.0).unwrap();
        assert!(analytic_bbar_linear(&sys, &op, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn substep_cap_is_enforced() {
        let mut cfg = canonical(0.001);
        cfg.max_substeps = 1000;
        assert!(matches!(cfg.validate(), Err(Error::Resolution(_))));
    }
}
