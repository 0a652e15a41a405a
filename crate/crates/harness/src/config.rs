//! Experiment configuration: TOML text with strict key checking.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fspde_core::fastslow::{DissipativityParams, LinearTestSystem};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Validate,
    FbmStats,
    StieltjesOracle,
    MollifyRate,
    MildSolve,
    FrozenMixing,
    AveragingStudy,
}

impl Kind {
    pub const ALL: [Kind; 7] = [
        Kind::Validate,
        Kind::FbmStats,
        Kind::StieltjesOracle,
        Kind::MollifyRate,
        Kind::MildSolve,
        Kind::FrozenMixing,
        Kind::AveragingStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Validate => "validate",
            Kind::FbmStats => "fbm-stats",
            Kind::StieltjesOracle => "stieltjes-oracle",
            Kind::MollifyRate => "mollify-rate",
            Kind::MildSolve => "mild-solve",
            Kind::FrozenMixing => "frozen-mixing",
            Kind::AveragingStudy => "averaging-study",
        }
    }

    /// Name of the TOML table holding this kind's settings.
    pub fn section(self) -> &'static str {
        match self {
            Kind::Validate => "validate",
            Kind::FbmStats => "fbm_stats",
            Kind::StieltjesOracle => "stieltjes_oracle",
            Kind::MollifyRate => "mollify_rate",
            Kind::MildSolve => "mild_solve",
            Kind::FrozenMixing => "frozen_mixing",
            Kind::AveragingStudy => "averaging_study",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_hurst(name: &str, h: f64) -> Result<(), ConfigError> {
    if h > 0.5 && h < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {h}: the Hurst index must lie in H ∈ (1/2, 1)")))
    }
}

fn check_alpha(name: &str, alpha: f64, hurst: f64) -> Result<(), ConfigError> {
    if alpha > 1.0 - hurst && alpha < 0.5 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} = {alpha}: alpha must lie in (1-H, 1/2) = ({}, 0.5)",
            1.0 - hurst
        )))
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn check_at_least(name: &str, v: usize, min: usize) -> Result<(), ConfigError> {
    if v >= min {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be at least {min}, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FbmStatsConfig {
    pub hursts: Vec<f64>,
    pub paths: usize,
    /// Grid points `t_i = i T / points`, `i = 1..=points`.
    pub points: usize,
    pub horizon: f64,
    /// Largest admissible |sample − exact| in standard errors.
    pub max_z: f64,
}

impl Default for FbmStatsConfig {
    fn default() -> Self {
        Self {
            hursts: vec![0.6, 0.75, 0.9],
            paths: 10_000,
            points: 32,
            horizon: 1.0,
            max_z: 3.0,
        }
    }
}

impl FbmStatsConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        if self.hursts.is_empty() {
            return Err(invalid("fbm_stats.hursts must not be empty"));
        }
        for &h in &self.hursts {
            check_hurst("fbm_stats.hursts", h)?;
        }
        check_at_least("fbm_stats.paths", self.paths, 2)?;
        check_at_least("fbm_stats.points", self.points, 1)?;
        check_positive("fbm_stats.horizon", self.horizon)?;
        check_positive("fbm_stats.max_z", self.max_z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StieltjesConfig {
    /// Grid points for the `∫ r d(r²)` oracle.
    pub points: usize,
    pub tolerance: f64,
    pub pairs: usize,
    pub pair_points: usize,
    pub hurst: f64,
    /// Defaults to the midpoint of `(1-H, 1/2)`.
    pub alpha: Option<f64>,
}

impl Default for StieltjesConfig {
    fn default() -> Self {
        Self {
            points: 2048,
            tolerance: 1e-3,
            pairs: 100,
            pair_points: 257,
            hurst: 0.7,
            alpha: None,
        }
    }
}

impl StieltjesConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha
            .unwrap_or_else(|| fspde_core::fbm::default_alpha(self.hurst))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        check_hurst("stieltjes_oracle.hurst", self.hurst)?;
        check_alpha("stieltjes_oracle.alpha", self.alpha(), self.hurst)?;
        check_at_least("stieltjes_oracle.points", self.points, 3)?;
        check_at_least("stieltjes_oracle.pair_points", self.pair_points, 3)?;
        check_positive("stieltjes_oracle.tolerance", self.tolerance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MollifyConfig {
    pub samples: usize,
    pub hurst: f64,
    pub alpha: f64,
    /// Hölder exponent ϖ of the sample paths.
    pub holder: f64,
    pub ns: Vec<usize>,
    /// Grid points for the rate fit.
    pub slope_points: usize,
    pub slope_tolerance: f64,
    /// Stopping levels `N`.
    pub levels: Vec<f64>,
    /// Grid points for the stopped-path ratios.
    pub level_points: usize,
    pub modes: usize,
    pub decay: f64,
    pub scale: f64,
    /// Largest admissible max/min spread of `Λ/N` across levels.
    pub ratio_spread: f64,
}

impl Default for MollifyConfig {
    fn default() -> Self {
        Self {
            samples: 50,
            hurst: 0.8,
            alpha: 0.35,
            holder: 0.7,
            ns: vec![8, 16, 32, 64, 128],
            slope_points: 4097,
            slope_tolerance: 0.15,
            levels: vec![1.0, 2.0, 4.0, 8.0],
            level_points: 2049,
            modes: 4,
            decay: 3.0,
            scale: 1.0,
            ratio_spread: 3.0,
        }
    }
}

impl MollifyConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        check_hurst("mollify_rate.hurst", self.hurst)?;
        check_alpha("mollify_rate.alpha", self.alpha, self.hurst)?;
        if !(self.holder > 1.0 - self.alpha && self.holder < self.hurst) {
            return Err(invalid(format!(
                "mollify_rate.holder = {}: the Hölder exponent must lie in (1-alpha, H) = ({}, {})",
                self.holder,
                1.0 - self.alpha,
                self.hurst
            )));
        }
        check_at_least("mollify_rate.samples", self.samples, 1)?;
        check_at_least("mollify_rate.ns (count)", self.ns.len(), 3)?;
        check_at_least("mollify_rate.levels (count)", self.levels.len(), 2)?;
        for &l in &self.levels {
            check_positive("mollify_rate.levels", l)?;
        }
        check_at_least("mollify_rate.modes", self.modes, 1)?;
        check_positive("mollify_rate.scale", self.scale)?;
        if !(self.decay > 2.0) {
            return Err(invalid(format!(
                "mollify_rate.decay = {}: trace decay exponent must exceed 2",
                self.decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MildConfig {
    pub paths: usize,
    /// Eigenvalue of the single-mode OU checks.
    pub lambda: f64,
    pub horizon: f64,
    /// Step of the Itô OU check.
    pub ou_dt: f64,
    /// Step of the additive-fBm check.
    pub fbm_dt: f64,
    pub hurst: f64,
    pub max_z: f64,
    /// Dirichlet modes of the Δt-halving check.
    pub halving_modes: usize,
    pub halving_dt: f64,
    pub halving_paths: usize,
    pub min_halving_factor: f64,
}

impl Default for MildConfig {
    fn default() -> Self {
        Self {
            paths: 10_000,
            lambda: 2.0,
            horizon: 1.0,
            ou_dt: 1.0 / 2048.0,
            fbm_dt: 1.0 / 512.0,
            hurst: 0.7,
            max_z: 3.0,
            halving_modes: 4,
            halving_dt: 1.0 / 1024.0,
            halving_paths: 16,
            min_halving_factor: 1.7,
        }
    }
}

impl MildConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        check_at_least("mild_solve.paths", self.paths, 2)?;
        check_positive("mild_solve.lambda", self.lambda)?;
        check_positive("mild_solve.horizon", self.horizon)?;
        check_positive("mild_solve.ou_dt", self.ou_dt)?;
        check_positive("mild_solve.fbm_dt", self.fbm_dt)?;
        check_positive("mild_solve.halving_dt", self.halving_dt)?;
        check_hurst("mild_solve.hurst", self.hurst)?;
        check_at_least("mild_solve.halving_modes", self.halving_modes, 1)?;
        check_at_least("mild_solve.halving_paths", self.halving_paths, 1)
    }
}

/// Single-mode system for the averaged-drift check: `b = y`, `F = −y + 1`.
fn drift_check_system() -> LinearTestSystem<f64> {
    LinearTestSystem {
        fast_offset: 1.0,
        fast_coupling: 0.0,
        slow_sine: 0.0,
        slow_fast: 1.0,
        ..LinearTestSystem::canonical()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrozenConfig {
    pub modes: usize,
    pub system: LinearTestSystem<f64>,
    pub params: Option<DissipativityParams>,
    /// Frozen slow state, the same in every mode.
    pub x: f64,
    pub z: f64,
    pub z_prime: f64,
    pub couples: usize,
    pub dt: f64,
    /// The coupling curve is followed on `[0, horizon_factor / η]`.
    pub horizon_factor: f64,
    pub decorrelation_lags: Vec<usize>,
    pub decorrelation_horizon: f64,
    pub drift_modes: usize,
    pub drift_system: LinearTestSystem<f64>,
    pub drift_x: f64,
    pub drift_horizon: f64,
    pub drift_dt: f64,
    pub drift_batches: usize,
    pub drift_rel_tolerance: f64,
    pub max_z: f64,
}

impl Default for FrozenConfig {
    fn default() -> Self {
        Self {
            modes: 4,
            system: LinearTestSystem::canonical(),
            params: None,
            x: 0.5,
            z: 1.0,
            z_prime: -1.0,
            couples: 10_000,
            dt: 1e-3,
            horizon_factor: 10.0,
            decorrelation_lags: vec![0, 10, 20, 40, 80],
            decorrelation_horizon: 400.0,
            drift_modes: 1,
            drift_system: drift_check_system(),
            drift_x: 0.0,
            drift_horizon: 2e4,
            drift_dt: 0.005,
            drift_batches: 100,
            drift_rel_tolerance: 0.01,
            max_z: 3.0,
        }
    }
}

impl FrozenConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        check_at_least("frozen_mixing.modes", self.modes, 1)?;
        check_at_least("frozen_mixing.couples", self.couples, 2)?;
        check_positive("frozen_mixing.dt", self.dt)?;
        check_positive("frozen_mixing.horizon_factor", self.horizon_factor)?;
        check_at_least("frozen_mixing.drift_modes", self.drift_modes, 1)?;
        check_positive("frozen_mixing.drift_horizon", self.drift_horizon)?;
        check_positive("frozen_mixing.drift_dt", self.drift_dt)?;
        check_at_least("frozen_mixing.drift_batches", self.drift_batches, 2)?;
        check_positive("frozen_mixing.drift_rel_tolerance", self.drift_rel_tolerance)?;
        self.system.validate().map_err(|e| invalid(e.to_string()))?;
        self.drift_system.validate().map_err(|e| invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AveragingConfig {
    pub eps: Vec<f64>,
    pub replicates: usize,
    pub modes: usize,
    pub horizon: f64,
    pub slow_dt: f64,
    pub hurst: f64,
    pub decay: f64,
    pub scale: f64,
    pub x0: f64,
    pub y0: f64,
    pub system: LinearTestSystem<f64>,
    pub params: Option<DissipativityParams>,
    pub max_error_ratio: f64,
    /// Also run the control study with `b` independent of `y`.
    pub control: bool,
    /// Control errors must stay below this fraction of the coupled errors.
    pub control_fraction: f64,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        Self {
            eps: vec![0.1, 0.05, 0.02, 0.01],
            replicates: 200,
            modes: 4,
            horizon: 1.0,
            slow_dt: 1.0 / 128.0,
            hurst: 0.7,
            decay: 3.0,
            scale: 1.0,
            x0: 0.5,
            y0: 0.0,
            system: LinearTestSystem::canonical(),
            params: None,
            max_error_ratio: 0.5,
            control: true,
            control_fraction: 1e-6,
        }
    }
}

impl AveragingConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        fspde_core::fastslow::check_eps_list(&self.eps).map_err(|e| invalid(format!("averaging_study.eps: {e}")))?;
        if self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(invalid("averaging_study.eps entries must lie in (0, 1)"));
        }
        check_at_least("averaging_study.replicates", self.replicates, 2)?;
        check_at_least("averaging_study.modes", self.modes, 1)?;
        check_hurst("averaging_study.hurst", self.hurst)?;
        check_positive("averaging_study.slow_dt", self.slow_dt)?;
        check_positive("averaging_study.horizon", self.horizon)?;
        self.system.validate().map_err(|e| invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateConfig {
    pub modes: usize,
    pub length: f64,
    pub system: LinearTestSystem<f64>,
    pub params: Option<DissipativityParams>,
    pub samples: usize,
    /// Also confirm that the gate rejects broken constant sets.
    pub gate_checks: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            modes: 4,
            length: 1.0,
            system: LinearTestSystem::canonical(),
            params: None,
            samples: 2000,
            gate_checks: true,
        }
    }
}

impl ValidateConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        check_at_least("validate.modes", self.modes, 1)?;
        check_positive("validate.length", self.length)?;
        check_at_least("validate.samples", self.samples, 1)?;
        self.system.validate().map_err(|e| invalid(e.to_string()))
    }
}

/// Kind-specific settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Settings {
    Validate(ValidateConfig),
    FbmStats(FbmStatsConfig),
    StieltjesOracle(StieltjesConfig),
    MollifyRate(MollifyConfig),
    MildSolve(MildConfig),
    FrozenMixing(FrozenConfig),
    AveragingStudy(AveragingConfig),
}

#[derive(Debug, Deserialize)]
struct RawConfig {
    kind: Kind,
    seed: u64,
    #[serde(default)]
    threads: Option<usize>,
    validate: Option<ValidateConfig>,
    fbm_stats: Option<FbmStatsConfig>,
    stieltjes_oracle: Option<StieltjesConfig>,
    mollify_rate: Option<MollifyConfig>,
    mild_solve: Option<MildConfig>,
    frozen_mixing: Option<FrozenConfig>,
    averaging_study: Option<AveragingConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    /// Worker threads; not part of the configuration hash.
    pub threads: Option<usize>,
    pub settings: Settings,
}

#[derive(Serialize)]
struct Canonical<'a> {
    kind: Kind,
    seed: u64,
    settings: &'a Settings,
}

impl ExperimentConfig {
    /// Default settings for `kind`.
    pub fn new(kind: Kind, seed: u64) -> Self {
        let settings = match kind {
            Kind::Validate => Settings::Validate(Default::default()),
            Kind::FbmStats => Settings::FbmStats(Default::default()),
            Kind::StieltjesOracle => Settings::StieltjesOracle(Default::default()),
            Kind::MollifyRate => Settings::MollifyRate(Default::default()),
            Kind::MildSolve => Settings::MildSolve(Default::default()),
            Kind::FrozenMixing => Settings::FrozenMixing(Default::default()),
            Kind::AveragingStudy => Settings::AveragingStudy(Default::default()),
        };
        Self {
            kind,
            seed,
            threads: None,
            settings,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        match &self.settings {
            Settings::Validate(c) => c.validate(),
            Settings::FbmStats(c) => c.validate(),
            Settings::StieltjesOracle(c) => c.validate(),
            Settings::MollifyRate(c) => c.validate(),
            Settings::MildSolve(c) => c.validate(),
            Settings::FrozenMixing(c) => c.validate(),
            Settings::AveragingStudy(c) => c.validate(),
        }
    }

    /// Compact JSON with sorted keys, covering everything except `threads`.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(Canonical {
            kind: self.kind,
            seed: self.seed,
            settings: &self.settings,
        })
        .expect("config serialises");
        // serde_json maps are ordered by key
        value.to_string()
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

/// Parses and validates TOML config text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    parse_value(value)
}

/// As [`parse_config`] on an already parsed TOML document.
pub fn parse_value(value: toml::Value) -> Result<ExperimentConfig, ConfigError> {
    let mut unknown = Vec::new();
    let raw: RawConfig = serde_ignored::deserialize(value, |path| {
        // `?` marks the Option layer of a section
        let key: Vec<String> = path.to_string().split('.').filter(|s| *s != "?").map(str::to_string).collect();
        unknown.push(key.join("."))
    })
        .map_err(|e| invalid(e.to_string()))?;
    if !unknown.is_empty() {
        unknown.sort();
        return Err(ConfigError::UnknownKeys(unknown));
    }
    let kind = raw.kind;
    let sections = [
        (Kind::Validate, raw.validate.is_some()),
        (Kind::FbmStats, raw.fbm_stats.is_some()),
        (Kind::StieltjesOracle, raw.stieltjes_oracle.is_some()),
        (Kind::MollifyRate, raw.mollify_rate.is_some()),
        (Kind::MildSolve, raw.mild_solve.is_some()),
        (Kind::FrozenMixing, raw.frozen_mixing.is_some()),
        (Kind::AveragingStudy, raw.averaging_study.is_some()),
    ];
    let stray: Vec<String> = sections
        .iter()
        .filter(|(k, present)| *present && *k != kind)
        .map(|(k, _)| format!("[{}]", k.section()))
        .collect();
    if !stray.is_empty() {
        return Err(invalid(format!(
            "section(s) {} do not belong to kind {kind}",
            stray.join(", ")
        )));
    }
    let settings = match kind {
        Kind::Validate => Settings::Validate(raw.validate.unwrap_or_default()),
        Kind::FbmStats => Settings::FbmStats(raw.fbm_stats.unwrap_or_default()),
        Kind::StieltjesOracle => Settings::StieltjesOracle(raw.stieltjes_oracle.unwrap_or_default()),
        Kind::MollifyRate => Settings::MollifyRate(raw.mollify_rate.unwrap_or_default()),
        Kind::MildSolve => Settings::MildSolve(raw.mild_solve.unwrap_or_default()),
        Kind::FrozenMixing => Settings::FrozenMixing(raw.frozen_mixing.unwrap_or_default()),
        Kind::AveragingStudy => Settings::AveragingStudy(raw.averaging_study.unwrap_or_default()),
    };
    let config = ExperimentConfig {
        kind,
        seed: raw.seed,
        threads: raw.threads,
        settings,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = parse_config("kind = \"fbm-stats\"\nseed = 7\n").unwrap();
        assert_eq!(c.kind, Kind::FbmStats);
        assert_eq!(c.settings, Settings::FbmStats(FbmStatsConfig::default()));
    }

    #[test]
    fn low_hurst_is_rejected_with_the_admissible_range() {
        let err = parse_config("kind = \"fbm-stats\"\nseed = 1\n[fbm_stats]\nhursts = [0.4]\n").unwrap_err();
        assert!(err.to_string().contains("H ∈ (1/2, 1)"), "{err}");
    }

    #[test]
    fn missing_seed_is_rejected() {
        let err = parse_config("kind = \"fbm-stats\"\n").unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }

    #[test]
    fn unknown_keys_are_listed() {
        let err = parse_config("kind = \"fbm-stats\"\nseed = 1\nbogus = 2\n[fbm_stats]\npathz = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("fbm_stats.pathz"), "{msg}");
    }

    #[test]
    fn alpha_outside_range_names_the_condition() {
        let err = parse_config("kind = \"stieltjes-oracle\"\nseed = 1\n[stieltjes_oracle]\nalpha = 0.2\n").unwrap_err();
        assert!(err.to_string().contains("alpha must lie in (1-H, 1/2)"), "{err}");
    }

    #[test]
    fn hash_ignores_field_order_and_threads() {
        let a = parse_config("kind = \"mild-solve\"\nseed = 3\n[mild_solve]\npaths = 10\nlambda = 1.5\n").unwrap();
        let b = parse_config("seed = 3\nthreads = 4\nkind = \"mild-solve\"\n[mild_solve]\nlambda = 1.5\npaths = 10\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse_config("kind = \"mild-solve\"\nseed = 4\n[mild_solve]\npaths = 10\nlambda = 1.5\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn foreign_sections_are_rejected() {
        let err = parse_config("kind = \"validate\"\nseed = 1\n[fbm_stats]\npaths = 3\n").unwrap_err();
        assert!(err.to_string().contains("[fbm_stats]"), "{err}");
    }
}
