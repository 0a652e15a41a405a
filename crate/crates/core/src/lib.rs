//! Numerical toolkit for mixed fractional/Brownian stochastic evolution equations.
//!
//! The building blocks are exact fractional Brownian motion samplers, the
//! pathwise (Zähle) fractional integral and its norms, moving-average
//! mollification with stopping, a spectral mild-solution solver, and the
//! fast–slow averaging pipeline. Every routine is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix the common double-precision case.

pub mod error;
pub mod fastslow;
pub mod fbm;
pub mod fracint;
pub mod mollify;
pub mod path;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod semigroup;
pub mod spde;
pub mod stats;

pub use error::{Error, Result};
pub use path::{Grid, Path, PathKind};
pub use scalar::Scalar;

pub type Path64 = path::Path<f64>;
pub type Path32 = path::Path<f32>;
pub type Grid64 = path::Grid<f64>;
pub type QfbmSpec64 = fbm::QfbmSpec<f64>;
