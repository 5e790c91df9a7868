//! TOML configuration for the `simulate` and `sweep` commands. Every field
//! has a default, and the effective configuration is written back into the
//! run manifest.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::autocorr::ProjectorStorage;
use crate::datagen::SyntheticSpec;
use crate::error::{Error, Result};
use crate::nmf::UpdateMethod;
use crate::recovery::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Periodic,
    Random,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Periodic => "periodic",
            SchemeKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Unpenalized,
    Penalized,
    Interpolation,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Unpenalized => "unpenalized",
            Method::Penalized => "penalized",
            Method::Interpolation => "interpolation",
        }
    }
}

/// `auto` selects the heuristic `min(1, 1/(2 max_n δ_{ρ_n,1}))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Auto,
    Value(f64),
}

impl std::str::FromStr for LambdaChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaChoice::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(LambdaChoice::Value(v)),
            _ => Err(Error::Config(format!("lambda must be 'auto' or a finite value >= 0, got '{s}'"))),
        }
    }
}

impl std::fmt::Display for LambdaChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LambdaChoice::Auto => f.write_str("auto"),
            LambdaChoice::Value(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for LambdaChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LambdaChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Number(v) => v.to_string().parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Where the ground truth comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Label written into the `dataset` column.
    pub name: String,
    /// Ground-truth CSV; synthetic data is generated when absent.
    pub truth: Option<PathBuf>,
    /// Thresholds CSV (`column,rho`) for the penalized method.
    pub rho: Option<PathBuf>,
    /// History CSV from which thresholds are estimated when `rho` is absent.
    pub history: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { name: "synthetic".into(), truth: None, rho: None, history: None, synthetic: SyntheticSpec::default() }
    }
}

/// Recovery settings shared by all cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub epsilon_scale: f64,
    pub hals_sweeps: usize,
    pub nesterov_inner: usize,
    pub lambda: LambdaChoice,
    pub projector_storage: ProjectorStorage,
    pub activation: Activation,
    /// Per-run wall-clock budget in seconds.
    pub time_limit_secs: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            epsilon_scale: 1e-6,
            hals_sweeps: 1,
            nesterov_inner: 20,
            lambda: LambdaChoice::Auto,
            projector_storage: ProjectorStorage::Dense,
            activation: Activation::PerIteration,
            time_limit_secs: None,
        }
    }
}

/// The experiment matrix: schemes × rates × methods × updates × ranks ×
/// repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub seed: u64,
    pub repeats: usize,
    pub schemes: Vec<SchemeKind>,
    /// Periodic intervals; paired position by position with `rates`.
    pub intervals: Vec<usize>,
    /// Random-sampling rates and the nominal rate reported for both schemes.
    pub rates: Vec<f64>,
    pub methods: Vec<Method>,
    pub updates: Vec<UpdateMethod>,
    pub ranks: Vec<usize>,
    /// Fill the `runtime` column. Off by default so that results are
    /// byte-identical across runs.
    pub record_runtime: bool,
    pub solver: SolverConfig,
    pub dataset: DatasetConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            repeats: 3,
            schemes: vec![SchemeKind::Periodic, SchemeKind::Random],
            intervals: vec![2, 3, 5, 7, 10, 15, 30],
            rates: vec![0.5, 0.33, 0.2, 0.14, 0.1, 0.07, 0.03],
            methods: vec![Method::Unpenalized, Method::Penalized, Method::Interpolation],
            updates: vec![UpdateMethod::Hals, UpdateMethod::Nesterov],
            ranks: (2..=20).collect(),
            record_runtime: false,
            solver: SolverConfig::default(),
            dataset: DatasetConfig::default(),
        }
    }
}

impl SweepConfig {
    /// Reduced matrix: ranks {5, 10, 20} at rates {0.1, 0.03}.
    pub fn smoke() -> Self {
        Self { intervals: vec![10, 30], rates: vec![0.1, 0.03], ranks: vec![5, 10, 20], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.repeats == 0 {
            return fail("repeats must be >= 1".into());
        }
        if self.schemes.is_empty() || self.methods.is_empty() || self.rates.is_empty() {
            return fail("schemes, rates and methods must be non-empty".into());
        }
        if self.intervals.len() != self.rates.len() {
            return fail(format!(
                "intervals ({}) and rates ({}) are paired and must have the same length",
                self.intervals.len(),
                self.rates.len()
            ));
        }
        if self.intervals.contains(&0) {
            return fail("intervals must be >= 1".into());
        }
        if self.rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return fail("rates must lie in (0, 1]".into());
        }
        let factorized = self.methods.iter().any(|m| *m != Method::Interpolation);
        if factorized && (self.ranks.is_empty() || self.updates.is_empty()) {
            return fail("ranks and updates must be non-empty for factorization methods".into());
        }
        if self.ranks.contains(&0) {
            return fail("ranks must be >= 1".into());
        }
        if self.solver.hals_sweeps == 0 || self.solver.nesterov_inner == 0 {
            return fail("inner iteration counts must be >= 1".into());
        }
        if !(self.solver.epsilon_scale >= 0.0) {
            return fail("epsilon_scale must be >= 0".into());
        }
        if let Some(t) = self.solver.time_limit_secs {
            if !(t > 0.0) {
                return fail("time_limit_secs must be > 0".into());
            }
        }
        if self.dataset.truth.is_none() {
            self.dataset.synthetic.validate()?;
        }
        Ok(())
    }
}

/// Configuration of the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub synthetic: SyntheticSpec,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = SweepConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: SweepConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        back.validate().unwrap();
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg: SweepConfig = toml::from_str("repeats = 1\nranks = [3]\n[solver]\nlambda = 0.25\n").unwrap();
        assert_eq!(cfg.repeats, 1);
        assert_eq!(cfg.solver.lambda, LambdaChoice::Value(0.25));
        assert_eq!(cfg.solver.max_iters, 500);
        assert_eq!(cfg.intervals.len(), 7);
    }

    #[test]
    fn invalid_configs() {
        assert!(toml::from_str::<SweepConfig>("bogus = 1").is_err());
        let bad = SweepConfig { intervals: vec![2], ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = SweepConfig { repeats: 0, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!("-1".parse::<LambdaChoice>().is_err());
        assert_eq!("AUTO".parse::<LambdaChoice>().unwrap(), LambdaChoice::Auto);
    }
}
