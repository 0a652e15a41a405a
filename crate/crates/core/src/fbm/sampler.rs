use std::sync::Arc;

use num_traits::Float;
use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::path::{Grid, Path};
use crate::rng::{substream, Domain};
use crate::scalar::Scalar;

/// `E[β(t)β(s)] = ½(t^{2H} + s^{2H} - |t-s|^{2H})`.
pub fn fbm_covariance<T: Scalar>(hurst: T, t: T, s: T) -> T {
    let two_h = hurst + hurst;
    let half = T::lit(0.5);
    half * (t.abs().powf(two_h) + s.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_autocov(hurst: f64, k: usize) -> f64 {
    let two_h = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMethod {
    CirculantEmbedding,
    Cholesky,
}

#[derive(Clone)]
enum Engine<T: Scalar> {
    Circulant {
        /// `sqrt(λ_j / 2n)` for the `2n` circulant eigenvalues.
        amplitude: Vec<T>,
        fft: Arc<dyn Fft<T>>,
    },
    /// Packed lower-triangular factor of the covariance of `β(t_1..t_n)`.
    Cholesky { lower: Vec<T> },
}

/// Exact sampler for one-dimensional fBm on a fixed uniform grid starting at 0.
#[derive(Clone)]
pub struct FbmSampler<T: Scalar> {
    hurst: T,
    times: Vec<T>,
    step: T,
    engine: Engine<T>,
    fell_back: bool,
}

impl<T: Scalar> std::fmt::Debug for FbmSampler<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmSampler")
            .field("hurst", &self.hurst)
            .field("points", &self.times.len())
            .field("method", &self.method())
            .field("fell_back", &self.fell_back)
            .finish()
    }
}

impl<T: Scalar> FbmSampler<T> {
    /// Circulant-embedding sampler; falls back to Cholesky if the embedding
    /// has a materially negative eigenvalue.
    pub fn new(hurst: T, grid: &Grid<T>) -> Result<Self> {
        let step = check_grid(hurst, grid)?;
        let n = grid.len() - 1;
        match circulant_amplitudes(hurst.to_f64_lossy(), n) {
            Some(amp) => {
                let scale = step.to_f64_lossy().powf(hurst.to_f64_lossy());
                let amplitude = amp.into_iter().map(|a| T::lit(a * scale)).collect();
                let fft = FftPlanner::new().plan_fft_forward(2 * n);
                Ok(Self {
                    hurst,
                    times: grid.times().to_vec(),
                    step,
                    engine: Engine::Circulant { amplitude, fft },
                    fell_back: false,
                })
            }
            None => {
                let mut s = Self::cholesky(hurst, grid)?;
                s.fell_back = true;
                Ok(s)
            }
        }
    }

    /// Dense Cholesky sampler (O(K³) setup); exact on any grid size.
    pub fn cholesky(hurst: T, grid: &Grid<T>) -> Result<Self> {
        let step = check_grid(hurst, grid)?;
        let t: Vec<f64> = grid.times()[1..].iter().map(|x| x.to_f64_lossy()).collect();
        let h = hurst.to_f64_lossy();
        let n = t.len();
        let mut lower = vec![0.0f64; n * (n + 1) / 2];
        let idx = |i: usize, j: usize| i * (i + 1) / 2 + j;
        for i in 0..n {
            for j in 0..=i {
                let mut sum = fbm_covariance(h, t[i], t[j]);
                for k in 0..j {
                    sum -= lower[idx(i, k)] * lower[idx(j, k)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::Sampler(format!(
                            "covariance not positive definite at row {i}"
                        )));
                    }
                    lower[idx(i, i)] = sum.sqrt();
                } else {
                    lower[idx(i, j)] = sum / lower[idx(j, j)];
                }
            }
        }
        Ok(Self {
            hurst,
            times: grid.times().to_vec(),
            step,
            engine: Engine::Cholesky {
                lower: lower.into_iter().map(T::lit).collect(),
            },
            fell_back: false,
        })
    }

    pub fn hurst(&self) -> T {
        self.hurst
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn method(&self) -> SamplerMethod {
        match self.engine {
            Engine::Circulant { .. } => SamplerMethod::CirculantEmbedding,
            Engine::Cholesky { .. } => SamplerMethod::Cholesky,
        }
    }

    /// True when circulant embedding failed and the Cholesky factor is used instead.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    /// Fill `out` (length K) with one path `β(t_0) = 0, β(t_1), ...`.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [T]) {
        let n = self.times.len() - 1;
        assert_eq!(out.len(), n + 1);
        out[0] = T::zero();
        match &self.engine {
            Engine::Circulant { amplitude, fft } => {
                let mut buf: Vec<Complex<T>> = amplitude
                    .iter()
                    .map(|&a| {
                        let re = T::standard_normal(rng);
                        let im = T::standard_normal(rng);
                        Complex::new(a * re, a * im)
                    })
                    .collect();
                fft.process(&mut buf);
                let mut acc = T::zero();
                for k in 0..n {
                    acc = acc + buf[k].re;
                    out[k + 1] = acc;
                }
            }
            Engine::Cholesky { lower } => {
                let z: Vec<T> = (0..n).map(|_| T::standard_normal(rng)).collect();
                for i in 0..n {
                    let row = &lower[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
                    out[i + 1] = row.iter().zip(&z).fold(T::zero(), |s, (&l, &x)| s + l * x);
                }
            }
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Path<T> {
        let mut values = vec![T::zero(); self.times.len()];
        self.fill(rng, &mut values);
        Path::scalar(self.times.clone(), values).expect("sampler output is a valid path")
    }

    /// Path drawn from the first fBm-mode stream of `seed`.
    pub fn sample(&self, seed: u64) -> Path<T> {
        self.sample_with(&mut substream(seed, Domain::FbmMode, 0))
    }
}

fn check_grid<T: Scalar>(hurst: T, grid: &Grid<T>) -> Result<T> {
    if !(hurst > T::zero() && hurst < T::one()) {
        return Err(param(format!("Hurst index must lie in (0, 1), got {hurst}")));
    }
    if grid.len() < 2 {
        return Err(Error::Resolution("fBm sampling needs at least 2 grid points".into()));
    }
    if grid.times()[0] != T::zero() {
        return Err(Error::Resolution("fBm grid must start at t = 0".into()));
    }
    grid.uniform_step()
        .ok_or_else(|| Error::Resolution("exact fBm sampling requires a uniform grid".into()))
}

/// `sqrt(λ_j / 2n)` for the circulant embedding of unit-step fGn with `n`
/// increments, or `None` if an eigenvalue is materially negative.
fn circulant_amplitudes(hurst: f64, n: usize) -> Option<Vec<f64>> {
    let m = 2 * n;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex::new(fgn_autocov(hurst, lag), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    let max = row.iter().fold(0.0f64, |a, c| a.max(c.re.abs()));
    let tol = 1e-10 * max.max(1.0);
    row.iter()
        .map(|c| {
            if c.re < -tol {
                None
            } else {
                Some((c.re.max(0.0) / m as f64).sqrt())
            }
        })
        .collect()
}

/// One exact fBm path on a uniform grid starting at 0.
pub fn sample_fbm_1d<T: Scalar>(hurst: T, grid: &Grid<T>, seed: u64) -> Result<Path<T>> {
    Ok(FbmSampler::new(hurst, grid)?.sample(seed))
}

/// Truncated trace-class fBm `Σ √λ_i e_i β_i` with `λ_i = scale · i^{-p}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfbmSpec<T> {
    pub hurst: T,
    /// Decay exponent `p > 2`.
    pub decay: T,
    pub modes: usize,
    /// Common amplitude of the trace weights (1 for the plain `i^{-p}` law).
    pub scale: T,
}

impl<T: Scalar> QfbmSpec<T> {
    pub fn new(hurst: T, decay: T, modes: usize) -> Result<Self> {
        let spec = Self {
            hurst,
            decay,
            modes,
            scale: T::one(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_scale(mut self, scale: T) -> Result<Self> {
        self.scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let half = T::lit(0.5);
        if !(self.hurst > half && self.hurst < T::one()) {
            return Err(param(format!("hurst must lie in (1/2, 1), got {}", self.hurst)));
        }
        if !(self.decay > T::lit(2.0)) || !self.decay.is_finite() {
            return Err(param(format!(
                "trace decay exponent must exceed 2 so that Σ√λ_i < ∞, got {}",
                self.decay
            )));
        }
        if self.modes == 0 {
            return Err(param("noise mode count must be at least 1"));
        }
        if !(self.scale > T::zero()) || !self.scale.is_finite() {
            return Err(param(format!("trace scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    /// `λ_i` for `i = 1..=modes`.
    pub fn weights(&self) -> Vec<T> {
        (1..=self.modes)
            .map(|i| self.scale * T::from_usize_lossy(i).powf(-self.decay))
            .collect()
    }

    pub fn sqrt_weights(&self) -> Vec<T> {
        self.weights().into_iter().map(Float::sqrt).collect()
    }

    pub fn trace(&self) -> T {
        crate::scalar::pairwise_sum(&self.weights())
    }
}

/// Reusable Q-fBm sampler: one scalar sampler shared by every mode.
#[derive(Debug, Clone)]
pub struct QfbmSampler<T: Scalar> {
    spec: QfbmSpec<T>,
    sqrt_weights: Vec<T>,
    base: FbmSampler<T>,
}

impl<T: Scalar> QfbmSampler<T> {
    pub fn new(spec: QfbmSpec<T>, grid: &Grid<T>) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            sqrt_weights: spec.sqrt_weights(),
            base: FbmSampler::new(spec.hurst, grid)?,
            spec,
        })
    }

    pub fn spec(&self) -> &QfbmSpec<T> {
        &self.spec
    }

    pub fn scalar_sampler(&self) -> &FbmSampler<T> {
        &self.base
    }

    /// Mode `i` (0-based) uses fBm stream `i` of `seed`.
    pub fn sample(&self, seed: u64) -> Path<T> {
        let k = self.base.times().len();
        let m = self.spec.modes;
        let mut values = vec![T::zero(); k * m];
        let mut mode = vec![T::zero(); k];
        for (i, &w) in self.sqrt_weights.iter().enumerate() {
            self.base
                .fill(&mut substream(seed, Domain::FbmMode, i as u64), &mut mode);
            for (j, &v) in mode.iter().enumerate() {
                values[j * m + i] = w * v;
            }
        }
        Path::hilbert(self.base.times().to_vec(), m, values).expect("valid Q-fBm path")
    }
}

pub fn sample_qfbm<T: Scalar>(spec: &QfbmSpec<T>, grid: &Grid<T>, seed: u64) -> Result<Path<T>> {
    Ok(QfbmSampler::new(*spec, grid)?.sample(seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_values() {
        assert_eq!(fbm_covariance(0.7, 1.3, 0.0), 0.0);
        assert!((fbm_covariance(0.5, 1.0, 2.0) - 1.0).abs() < 1e-15);
        assert!((fbm_covariance(0.75f64, 1.0, 2.0) - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn embedding_is_nonnegative_across_hurst() {
        for &h in &[0.05, 0.3, 0.5, 0.7, 0.95] {
            assert!(circulant_amplitudes(h, 257).is_some(), "H = {h}");
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let g = Grid::new(vec![0.0, 0.1, 0.3]).unwrap();
        assert!(matches!(FbmSampler::new(0.7, &g), Err(Error::Resolution(_))));
        let g = Grid::uniform(1.0, 8).unwrap();
        assert!(matches!(FbmSampler::new(1.2, &g), Err(Error::Parameter(_))));
    }

    #[test]
    fn deterministic_per_seed() {
        let g = Grid::uniform(1.0f64, 65).unwrap();
        let a = sample_fbm_1d(0.7, &g, 11).unwrap();
        assert_eq!(a, sample_fbm_1d(0.7, &g, 11).unwrap());
        assert_ne!(a, sample_fbm_1d(0.7, &g, 12).unwrap());
        assert_eq!(a.at(0), 0.0);
    }

    #[test]
    fn single_mode_qfbm_matches_scalar_sampler() {
        let g = Grid::uniform(1.0f64, 33).unwrap();
        let spec = QfbmSpec::new(0.7, 3.0, 1).unwrap();
        let q = sample_qfbm(&spec, &g, 5).unwrap();
        let s = sample_fbm_1d(0.7, &g, 5).unwrap();
        assert_eq!(q.raw_values(), s.raw_values());
    }

    #[test]
    fn spec_validation() {
        assert!(QfbmSpec::new(0.4, 3.0, 2).is_err());
        assert!(QfbmSpec::new(0.7, 2.0, 2).is_err());
        assert!(QfbmSpec::new(0.7, 3.0, 0).is_err());
        let s = QfbmSpec::new(0.7f64, 3.0, 3).unwrap();
        assert!((s.weights()[1] - 0.125).abs() < 1e-15);
    }
}
