//! Diagonal generator `A`, its analytic semigroup and fractional powers.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::scalar::Scalar;

/// Eigenvalues `0 < λ̄_1 < … < λ̄_M` of `-A` in the eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralOperator<T> {
    eigenvalues: Vec<T>,
    label: String,
}

impl<T: Scalar> SpectralOperator<T> {
    pub fn new(eigenvalues: Vec<T>, label: impl Into<String>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(param("operator needs at least one mode"));
        }
        if !(eigenvalues[0] > T::zero()) || eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(param("eigenvalues of -A must be finite and positive"));
        }
        if eigenvalues.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(param("eigenvalues of -A must be strictly increasing"));
        }
        Ok(Self {
            eigenvalues,
            label: label.into(),
        })
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn first(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The leading `m` modes.
    pub fn truncate(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.modes() {
            return Err(param(format!("cannot truncate {} modes to {m}", self.modes())));
        }
        Self::new(self.eigenvalues[..m].to_vec(), self.label.clone())
    }

    fn check(&self, coeffs: &[T]) -> Result<()> {
        if coeffs.len() == self.modes() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "coefficient vector has {} entries, operator has {} modes",
                coeffs.len(),
                self.modes()
            )))
        }
    }

    /// Per-mode factors `e^{-λ̄_k t}`.
    pub fn decay_factors(&self, t: T) -> Result<Vec<T>> {
        if t < T::zero() {
            return Err(param(format!("semigroup time must be non-negative, got {t}")));
        }
        Ok(self.eigenvalues.iter().map(|&l| (-l * t).exp()).collect())
    }
}

/// `λ̄_k = (kπ/L)²`, `k = 1..=M`.
pub fn dirichlet_laplacian<T: Scalar>(modes: usize, length: T) -> Result<SpectralOperator<T>> {
    if modes == 0 {
        return Err(param("operator needs at least one mode"));
    }
    if !(length > T::zero()) {
        return Err(param(format!("domain length must be positive, got {length}")));
    }
    let pi = T::lit(std::f64::consts::PI);
    let eig = (1..=modes)
        .map(|k| {
            let w = T::from_usize_lossy(k) * pi / length;
            w * w
        })
        .collect();
    SpectralOperator::new(eig, format!("dirichlet-laplacian-[0,{length}]"))
}

/// `S_t x`.
pub fn semigroup_apply<T: Scalar>(op: &SpectralOperator<T>, t: T, coeffs: &[T]) -> Result<Vec<T>> {
    op.check(coeffs)?;
    let f = op.decay_factors(t)?;
    Ok(coeffs.iter().zip(f).map(|(&x, e)| x * e).collect())
}

/// `(-A)^β x`.
pub fn frac_power_apply<T: Scalar>(op: &SpectralOperator<T>, beta: T, coeffs: &[T]) -> Result<Vec<T>> {
    op.check(coeffs)?;
    if beta < T::zero() {
        return Err(param(format!("fractional power must be non-negative, got {beta}")));
    }
    Ok(coeffs
        .iter()
        .zip(&op.eigenvalues)
        .map(|(&x, &l)| x * l.powf(beta))
        .collect())
}

/// Graph norm `|x|_β = |(-A)^β x|`.
pub fn graph_norm<T: Scalar>(op: &SpectralOperator<T>, beta: T, coeffs: &[T]) -> Result<T> {
    Ok(crate::scalar::norm(&frac_power_apply(op, beta, coeffs)?))
}

/// Exponents of the four semigroup estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupExponents {
    /// `γ ≤ ς`: `|S_t|_{L(V_γ, V_ς)}`.
    pub gamma: f64,
    pub varsigma: f64,
    /// `|S_h - id|_{L(V_{υ+μ}, V_υ)} ≤ C h^μ`.
    pub upsilon: f64,
    pub mu: f64,
    pub varrho: f64,
    pub nu: f64,
}

impl SemigroupExponents {
    pub fn validate(&self) -> Result<()> {
        let Self {
            gamma,
            varsigma,
            upsilon,
            mu,
            varrho,
            nu,
        } = *self;
        if !(0.0 <= gamma && gamma <= varsigma && varsigma <= 1.0) {
            return Err(param(format!(
                "need 0 <= gamma <= varsigma <= 1, got gamma={gamma}, varsigma={varsigma}"
            )));
        }
        if !((0.0..1.0).contains(&upsilon) && mu > 0.0 && mu < 1.0 - upsilon) {
            return Err(param(format!(
                "need upsilon in [0,1) and mu in (0, 1-upsilon), got upsilon={upsilon}, mu={mu}"
            )));
        }
        if !(varrho > 0.0 && varrho <= 1.0 && nu > 0.0 && nu <= 1.0 && nu < gamma + varrho) {
            return Err(param(format!(
                "need varrho, nu in (0,1] with nu < gamma + varrho, got varrho={varrho}, nu={nu}"
            )));
        }
        Ok(())
    }
}

/// Measured `sup LHS / RHS` (RHS without its constant) for each estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupBoundReport {
    pub smoothing: f64,
    pub identity_gap: f64,
    pub time_difference: f64,
    pub double_difference: f64,
    pub samples: usize,
}

impl SemigroupBoundReport {
    pub fn all_finite(&self) -> bool {
        [
            self.smoothing,
            self.identity_gap,
            self.time_difference,
            self.double_difference,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn max_ratio(&self, other: &Self) -> f64 {
        let pairs = [
            (self.smoothing, other.smoothing),
            (self.identity_gap, other.identity_gap),
            (self.time_difference, other.time_difference),
            (self.double_difference, other.double_difference),
        ];
        pairs
            .iter()
            .map(|&(a, b)| a.max(b) / a.min(b))
            .fold(1.0, f64::max)
    }
}

/// Gaps `2^{-1}, 2^{-1-1/d}, …` down to `2^{-levels}` with `d` points per octave.
pub fn dyadic_gaps(levels: u32, per_octave: u32) -> Vec<f64> {
    let steps = (levels - 1) * per_octave;
    (0..=steps)
        .map(|j| 2f64.powf(-1.0 - j as f64 / per_octave as f64))
        .collect()
}

/// Measures the four estimates
/// `|S_t|_{L(V_γ,V_ς)} ≤ C t^{γ-ς} e^{-λ̄_1 t}`,
/// `|S_h - id|_{L(V_{υ+μ},V_υ)} ≤ C h^μ`,
/// `|S_{t-r} - S_{t-q}|_{L(V_ν,V_γ)} ≤ C (r-q)^ϱ (t-r)^{-ϱ-γ+ν}` and
/// `|S_{t-r} - S_{s-r} - S_{t-q} + S_{s-q}| ≤ C (t-s)^ϱ (r-q)^ν (s-r)^{-(ϱ+ν)}`
/// over all gap combinations drawn from `gaps`. Operator norms are exact sups over modes.
pub fn semigroup_bound_report(
    op: &SpectralOperator<f64>,
    exps: &SemigroupExponents,
    gaps: &[f64],
) -> Result<SemigroupBoundReport> {
    exps.validate()?;
    if gaps.is_empty() || gaps.iter().any(|&g| !(g > 0.0)) {
        return Err(param("sample gaps must be positive and non-empty"));
    }
    let SemigroupExponents {
        gamma,
        varsigma,
        upsilon: _,
        mu,
        varrho,
        nu,
    } = *exps;
    let eig = op.eigenvalues();
    let l1 = op.first();
    let sup = |f: &dyn Fn(f64) -> f64| eig.iter().map(|&l| f(l)).fold(0.0, f64::max);
    let mut samples = 0;

    let mut smoothing: f64 = 0.0;
    for &t in gaps {
        let lhs = sup(&|l| l.powf(varsigma - gamma) * (-l * t).exp());
        smoothing = smoothing.max(lhs / (t.powf(gamma - varsigma) * (-l1 * t).exp()));
        samples += 1;
    }

    let mut identity_gap: f64 = 0.0;
    for &h in gaps {
        let lhs = sup(&|l| l.powf(-mu) * -(-l * h).exp_m1());
        identity_gap = identity_gap.max(lhs / h.powf(mu));
        samples += 1;
    }

    let mut time_difference: f64 = 0.0;
    for &d_rq in gaps {
        for &d_tr in gaps {
            let lhs = sup(&|l| l.powf(gamma - nu) * (-l * d_tr).exp() * -(-l * d_rq).exp_m1());
            let rhs = d_rq.powf(varrho) * d_tr.powf(-varrho - gamma + nu);
            time_difference = time_difference.max(lhs / rhs);
            samples += 1;
        }
    }

    let mut double_difference: f64 = 0.0;
    for &d_rq in gaps {
        for &d_sr in gaps {
            for &d_ts in gaps {
                let lhs = sup(&|l| {
                    (-l * d_sr).exp() * -(-l * d_ts).exp_m1() * -(-l * d_rq).exp_m1()
                });
                let rhs = d_ts.powf(varrho) * d_rq.powf(nu) * d_sr.powf(-(varrho + nu));
                double_difference = double_difference.max(lhs / rhs);
                samples += 1;
            }
        }
    }

    Ok(SemigroupBoundReport {
        smoothing,
        identity_gap,
        time_difference,
        double_difference,
        samples,
    })
}
