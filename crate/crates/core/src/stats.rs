//! Small Monte Carlo statistics helpers. All reductions use pairwise summation
//! so results depend only on the order of the inputs.

use crate::scalar::{pairwise_sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate<T> {
    pub mean: T,
    /// Standard error of the mean.
    pub stderr: T,
    pub count: usize,
}

impl<T: Scalar> MeanEstimate<T> {
    /// |mean - target| expressed in standard errors (infinite when SE is zero and the values differ).
    pub fn z_score(&self, target: T) -> T {
        let diff = (self.mean - target).abs();
        if self.stderr > T::zero() {
            diff / self.stderr
        } else if diff == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    }
}

pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    pairwise_sum(xs) / T::from_usize_lossy(xs.len())
}

/// Unbiased sample variance.
pub fn variance<T: Scalar>(xs: &[T]) -> T {
    let n = xs.len();
    if n < 2 {
        return T::zero();
    }
    let m = mean(xs);
    let sq: Vec<T> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / T::from_usize_lossy(n - 1)
}

pub fn mean_estimate<T: Scalar>(xs: &[T]) -> MeanEstimate<T> {
    let n = xs.len();
    let stderr = if n > 1 {
        (variance(xs) / T::from_usize_lossy(n)).sqrt()
    } else {
        T::zero()
    };
    MeanEstimate {
        mean: mean(xs),
        stderr,
        count: n,
    }
}

/// Mean of a correlated series with a batch-means standard error.
pub fn batch_mean_estimate<T: Scalar>(xs: &[T], batches: usize) -> MeanEstimate<T> {
    let batches = batches.max(2).min(xs.len().max(1));
    let size = xs.len() / batches;
    if size == 0 {
        return mean_estimate(xs);
    }
    let means: Vec<T> = xs
        .chunks_exact(size)
        .take(batches)
        .map(mean)
        .collect();
    let est = mean_estimate(&means);
    MeanEstimate {
        mean: mean(&xs[..size * batches]),
        stderr: est.stderr,
        count: xs.len(),
    }
}

/// Sample covariance of paired observations together with the standard error
/// of that estimate (computed from the spread of the centred products).
pub fn covariance_estimate<T: Scalar>(xs: &[T], ys: &[T]) -> MeanEstimate<T> {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let prods: Vec<T> = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).collect();
    let mut est = mean_estimate(&prods);
    let n = T::from_usize_lossy(xs.len());
    if xs.len() > 1 {
        est.mean = est.mean * n / (n - T::one());
    }
    est
}

pub fn skewness<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    let v = variance(xs);
    let c3: Vec<T> = xs.iter().map(|&x| (x - m).powi(3)).collect();
    mean(&c3) / v.powf(T::lit(1.5))
}

/// Excess kurtosis.
pub fn excess_kurtosis<T: Scalar>(xs: &[T]) -> T {
    let m = mean(xs);
    let v = variance(xs);
    let c4: Vec<T> = xs.iter().map(|&x| (x - m).powi(4)).collect();
    mean(&c4) / (v * v) - T::lit(3.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
}

/// Ordinary least squares fit `y = slope * x + intercept`.
pub fn linear_fit<T: Scalar>(xs: &[T], ys: &[T]) -> LineFit<T> {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let sxy: Vec<T> = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).collect();
    let sxx: Vec<T> = xs.iter().map(|&x| (x - mx) * (x - mx)).collect();
    let slope = pairwise_sum(&sxy) / pairwise_sum(&sxx);
    LineFit {
        slope,
        intercept: my - slope * mx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_small_sample() {
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        let est = mean_estimate(&xs);
        assert!((est.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(skewness(&xs).abs() < 1e-15);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let fit = linear_fit(&xs, &ys);
        assert!((fit.slope - 2.0).abs() < 1e-14 && (fit.intercept + 1.0).abs() < 1e-14);
    }

    #[test]
    fn z_score_handles_zero_stderr() {
        let e = MeanEstimate { mean: 1.0f64, stderr: 0.0, count: 3 };
        assert_eq!(e.z_score(1.0), 0.0);
        assert!(e.z_score(2.0).is_infinite());
    }
}
