//! Fractional Brownian motion: exact samplers for the scalar process and the
//! trace-class Hilbert-valued series, plus the Hölder-type path norms.

mod norms;
mod sampler;

pub use norms::{
    default_alpha, holder_seminorm, lambda_alpha_norm, lambda_constant, lambda_profile,
    qfbm_lambda, qfbm_lambda_profile, NormReport,
};
pub(crate) use norms::pair_profile;
pub use sampler::{
    fbm_covariance, sample_fbm_1d, sample_qfbm, FbmSampler, QfbmSampler, QfbmSpec, SamplerMethod,
};
