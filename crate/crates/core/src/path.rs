//! Time grids and the trajectory carrier used across the crate.
//!
//! A [`Path`] stores one value vector per grid point in a flat buffer. Scalar
//! paths have one component; Hilbert-valued paths carry `M` mode coefficients
//! in a fixed orthonormal basis.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

/// Relative tolerance used to decide whether a grid is uniform.
const UNIFORM_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    times: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    pub fn new(times: Vec<T>) -> Result<Self> {
        validate_times(&times)?;
        Ok(Self { times })
    }

    /// `points` equally spaced nodes on `[0, horizon]`.
    pub fn uniform(horizon: T, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Resolution(format!(
                "a grid needs at least 2 points, got {points}"
            )));
        }
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(Error::Parameter(format!(
                "grid horizon must be positive and finite, got {horizon}"
            )));
        }
        let steps = T::from_usize_lossy(points - 1);
        let times = (0..points)
            .map(|k| horizon * T::from_usize_lossy(k) / steps)
            .collect();
        Ok(Self { times })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> T {
        *self.times.last().expect("grid is non-empty")
    }

    pub fn uniform_step(&self) -> Option<T> {
        uniform_step(&self.times)
    }

    pub fn into_times(self) -> Vec<T> {
        self.times
    }
}

fn validate_times<T: Scalar>(times: &[T]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidPath("empty time grid".into()));
    }
    if let Some(k) = times.iter().position(|t| !t.is_finite()) {
        return Err(Error::InvalidPath(format!("non-finite time at index {k}")));
    }
    if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidPath(format!(
            "times must be strictly increasing (index {} -> {})",
            k,
            k + 1
        )));
    }
    Ok(())
}

/// Common step of a uniform grid, if the grid is uniform.
pub fn uniform_step<T: Scalar>(times: &[T]) -> Option<T> {
    if times.len() < 2 {
        return None;
    }
    let n = times.len() - 1;
    let step = (times[n] - times[0]) / T::from_usize_lossy(n);
    let tol = step * T::lit(UNIFORM_RTOL) * T::from_usize_lossy(n.max(1));
    let ok = times
        .iter()
        .enumerate()
        .all(|(k, &t)| (t - (times[0] + step * T::from_usize_lossy(k))).abs() <= tol);
    ok.then_some(step)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Scalar,
    Hilbert(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path<T> {
    times: Vec<T>,
    values: Vec<T>,
    kind: PathKind,
}

impl<T: Scalar> Path<T> {
    pub fn scalar(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        Self::build(times, values, PathKind::Scalar)
    }

    /// Hilbert-valued path from a flat row-major buffer of `times.len() * modes` values.
    pub fn hilbert(times: Vec<T>, modes: usize, values: Vec<T>) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidPath("hilbert path needs at least one mode".into()));
        }
        Self::build(times, values, PathKind::Hilbert(modes))
    }

    pub fn from_rows(times: Vec<T>, rows: &[Vec<T>]) -> Result<Self> {
        let modes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != modes) {
            return Err(Error::InvalidPath("ragged mode rows".into()));
        }
        Self::hilbert(times, modes, rows.concat())
    }

    /// Scalar path `t -> f(t)` sampled on `times`.
    pub fn from_fn(times: Vec<T>, f: impl Fn(T) -> T) -> Result<Self> {
        let values = times.iter().map(|&t| f(t)).collect();
        Self::scalar(times, values)
    }

    /// Hilbert path with modes stacked from scalar component paths on a shared grid.
    pub fn stack(components: &[Path<T>]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidPath("no components to stack".into()))?;
        let m = components.len();
        let k = first.len();
        let mut values = vec![T::zero(); k * m];
        for (i, c) in components.iter().enumerate() {
            if c.dim() != 1 {
                return Err(Error::InvalidPath("stacked components must be scalar".into()));
            }
            same_grid(first, c)?;
            for j in 0..k {
                values[j * m + i] = c.values[j];
            }
        }
        Self::hilbert(first.times.clone(), m, values)
    }

    fn build(times: Vec<T>, values: Vec<T>, kind: PathKind) -> Result<Self> {
        validate_times(&times)?;
        let dim = match kind {
            PathKind::Scalar => 1,
            PathKind::Hilbert(m) => m,
        };
        if values.len() != times.len() * dim {
            return Err(Error::InvalidPath(format!(
                "expected {} values for {} grid points of dimension {}, got {}",
                times.len() * dim,
                times.len(),
                dim,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidPath(format!(
                "non-finite value at grid index {}",
                k / dim
            )));
        }
        Ok(Self { times, values, kind })
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            PathKind::Scalar => 1,
            PathKind::Hilbert(m) => m,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Flat row-major value buffer.
    pub fn raw_values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, k: usize) -> &[T] {
        let d = self.dim();
        &self.values[k * d..(k + 1) * d]
    }

    /// Scalar value at grid index `k`; panics for Hilbert paths with more than one mode.
    pub fn at(&self, k: usize) -> T {
        assert_eq!(self.dim(), 1, "at() requires a one-component path");
        self.values[k]
    }

    pub fn start(&self) -> T {
        self.times[0]
    }

    pub fn end(&self) -> T {
        self.times[self.times.len() - 1]
    }

    pub fn uniform_step(&self) -> Option<T> {
        uniform_step(&self.times)
    }

    /// Mode `i` as a scalar path.
    pub fn component(&self, i: usize) -> Path<T> {
        let d = self.dim();
        assert!(i < d, "component {i} out of range for dimension {d}");
        let values = self.values.iter().skip(i).step_by(d).copied().collect();
        Path {
            times: self.times.clone(),
            values,
            kind: PathKind::Scalar,
        }
    }

    pub fn components(&self) -> Vec<Path<T>> {
        (0..self.dim()).map(|i| self.component(i)).collect()
    }

    /// Scalar path of Euclidean norms `|h(t_k)|`.
    pub fn norms(&self) -> Path<T> {
        let values = (0..self.len()).map(|k| scalar::norm(self.value(k))).collect();
        Path {
            times: self.times.clone(),
            values,
            kind: PathKind::Scalar,
        }
    }

    /// Same grid and kind, new flat value buffer.
    pub fn with_values(&self, values: Vec<T>) -> Result<Path<T>> {
        Self::build(self.times.clone(), values, self.kind)
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> Result<Path<T>> {
        Self::build(
            self.times.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
            self.kind,
        )
    }

    pub fn scale(&self, c: T) -> Path<T> {
        Path {
            times: self.times.clone(),
            values: self.values.iter().map(|&v| v * c).collect(),
            kind: self.kind,
        }
    }

    /// Pointwise `self - other` on a shared grid.
    pub fn sub(&self, other: &Path<T>) -> Result<Path<T>> {
        same_grid(self, other)?;
        if self.dim() != other.dim() {
            return Err(Error::GridMismatch("dimension mismatch".into()));
        }
        Ok(Path {
            times: self.times.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
            kind: self.kind,
        })
    }

    /// Grid index of time `t` (within a relative tolerance of the local step).
    pub fn index_of(&self, t: T) -> Option<usize> {
        let idx = self.times.partition_point(|&s| s < t);
        let tol = T::lit(1e-9) * (self.end() - self.start()).max(T::one());
        [idx.checked_sub(1), Some(idx)]
            .into_iter()
            .flatten()
            .filter(|&k| k < self.len())
            .find(|&k| (self.times[k] - t).abs() <= tol)
    }

    pub fn require_index(&self, t: T) -> Result<usize> {
        self.index_of(t).ok_or_else(|| {
            Error::Resolution(format!("time {t} is not a grid point of this path"))
        })
    }

    /// Linear interpolation at `t`; times before the grid start return the first value.
    pub fn interpolate_into(&self, t: T, out: &mut [T]) {
        let d = self.dim();
        debug_assert_eq!(out.len(), d);
        if t <= self.start() {
            out.copy_from_slice(self.value(0));
            return;
        }
        if t >= self.end() {
            out.copy_from_slice(self.value(self.len() - 1));
            return;
        }
        let j = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[j], self.times[j + 1]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.value(j), self.value(j + 1));
        for c in 0..d {
            out[c] = a[c] + w * (b[c] - a[c]);
        }
    }

    pub fn interpolate(&self, t: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.interpolate_into(t, &mut out);
        out
    }

    /// Sub-path on grid indices `[lo, hi]` inclusive.
    pub fn slice(&self, lo: usize, hi: usize) -> Path<T> {
        assert!(lo <= hi && hi < self.len());
        let d = self.dim();
        Path {
            times: self.times[lo..=hi].to_vec(),
            values: self.values[lo * d..(hi + 1) * d].to_vec(),
            kind: self.kind,
        }
    }

    /// Every `stride`-th grid point, always keeping index 0.
    pub fn subsample(&self, stride: usize) -> Path<T> {
        assert!(stride >= 1);
        let keep: Vec<usize> = (0..self.len()).step_by(stride).collect();
        let d = self.dim();
        let mut values = Vec::with_capacity(keep.len() * d);
        for &k in &keep {
            values.extend_from_slice(self.value(k));
        }
        Path {
            times: keep.iter().map(|&k| self.times[k]).collect(),
            values,
            kind: self.kind,
        }
    }

    /// Largest pointwise distance to `other` on a shared grid.
    pub fn sup_distance(&self, other: &Path<T>) -> Result<T> {
        same_grid(self, other)?;
        Ok((0..self.len())
            .map(|k| scalar::distance(self.value(k), other.value(k)))
            .fold(T::zero(), T::max))
    }

    /// CSV with header `t,v0[,v1,...]` and 17 significant digits per entry.
    /// Each `comments` line is emitted first, prefixed by `# `.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push('t');
        for i in 0..self.dim() {
            let _ = write!(out, ",v{i}");
        }
        out.push('\n');
        for k in 0..self.len() {
            out.push_str(&format_decimal(self.times[k]));
            for &v in self.value(k) {
                out.push(',');
                out.push_str(&format_decimal(v));
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV layout written by [`Path::to_csv`]. One value column yields a scalar path.
    pub fn from_csv(text: &str) -> Result<Path<T>> {
        let mut lines = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidPath("missing CSV header".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(Error::InvalidPath(format!("unexpected CSV header {header:?}")));
        }
        for (i, c) in cols[1..].iter().enumerate() {
            if *c != format!("v{i}") {
                return Err(Error::InvalidPath(format!("unexpected column {c:?}")));
            }
        }
        let dim = cols.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim + 1 {
                return Err(Error::InvalidPath(format!("row {row} has {} fields", fields.len())));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::InvalidPath(format!("row {row}: {e}")))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                values.push(parse(f)?);
            }
        }
        if dim == 1 {
            Path::scalar(times, values)
        } else {
            Path::hilbert(times, dim, values)
        }
    }
}

/// Seventeen significant digits, enough to round-trip an `f64`.
pub fn format_decimal<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.to_f64_lossy())
}

pub(crate) fn same_grid<T: Scalar>(a: &Path<T>, b: &Path<T>) -> Result<()> {
    if a.times != b.times {
        return Err(Error::GridMismatch(format!(
            "paths live on different grids ({} vs {} points)",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_increasing_times() {
        let err = Path::scalar(vec![0.0, 1.0, 1.0], vec![0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::InvalidPath(_)));
    }

    #[test]
    fn rejects_length_mismatch_and_nan() {
        assert!(Path::scalar(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(Path::scalar(vec![0.0, 1.0], vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn uniform_detection() {
        let g = Grid::<f64>::uniform(1.0, 11).unwrap();
        assert!((g.uniform_step().unwrap() - 0.1).abs() < 1e-15);
        let g = Grid::new(vec![0.0, 0.1, 0.3]).unwrap();
        assert!(g.uniform_step().is_none());
    }

    #[test]
    fn components_round_trip_through_stack() {
        let times = vec![0.0, 0.5, 1.0];
        let p = Path::from_rows(times, &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let back = Path::stack(&p.components()).unwrap();
        assert_eq!(back, p);
        assert_eq!(p.component(1).raw_values(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let times = vec![0.0, 1.0 / 3.0, 0.7];
        let p = Path::from_rows(times, &[vec![0.1, -2.5e-17], vec![1.0 / 7.0, 3.0], vec![0.0, 1e300]])
            .unwrap();
        let text = p.to_csv(&["config_hash=abc".into()]);
        assert!(text.starts_with("# config_hash=abc\nt,v0,v1\n"));
        assert_eq!(Path::<f64>::from_csv(&text).unwrap(), p);
    }

    #[test]
    fn interpolation_and_index_lookup() {
        let p = Path::from_fn(vec![0.0, 0.5, 1.0], |t| 2.0 * t).unwrap();
        assert_eq!(p.interpolate(0.25), vec![0.5]);
        assert_eq!(p.interpolate(-1.0), vec![0.0]);
        assert_eq!(p.index_of(0.5), Some(1));
        assert_eq!(p.index_of(0.4), None);
    }
}
