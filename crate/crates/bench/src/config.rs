//! Experiment configuration: one TOML file describing the market, the
//! contract, the path budgets and every solver knob. Unknown keys are
//! rejected — a silently ignored typo would corrupt a benchmark claim.

use std::fmt;
use std::path::Path;

use bermudan::cos::CosConfig;
use bermudan::exposure::{default_scenarios, Scenario};
use bermudan::hedge::TrainingConfig;
use bermudan::{BermudanSpec, MarketParams, OptionType};
use serde::{Deserialize, Serialize};

/// A configuration problem: unreadable file, syntax error, unknown key or a
/// value outside its domain. Distinct from numerical failures so the CLI can
/// exit 2 instead of 3.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output directory; the `--out` flag overrides it.
    pub out_dir: String,
    pub market: MarketParams,
    pub contract: ContractBlock,
    pub paths: PathsBlock,
    pub training: TrainingConfig,
    pub cos: CosConfig,
    pub converge: ConvergeBlock,
    pub exposure: ExposureBlock,
    pub fine: FineBlock,
    /// Real-world scenarios, in the order the `--scenario` flag counts them.
    pub scenarios: Vec<Scenario>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            out_dir: "bench-out".to_string(),
            market: MarketParams { s0: 1.0, r: 0.06, sigma: 0.2 },
            contract: ContractBlock::default(),
            paths: PathsBlock::default(),
            training: TrainingConfig::default(),
            cos: CosConfig::default(),
            converge: ConvergeBlock::default(),
            exposure: ExposureBlock::default(),
            fine: FineBlock::default(),
            scenarios: default_scenarios(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractBlock {
    pub side: OptionType,
    pub maturity: f64,
    /// Evenly spaced exercise dates; 4 means quarterly for a 1-year deal.
    pub exercise_count: usize,
    /// Strike as a fraction of spot: 1.00 at the money, 1.10 / 0.90 in and
    /// out of the money for a put.
    pub moneyness: f64,
}

impl Default for ContractBlock {
    fn default() -> Self {
        ContractBlock {
            side: OptionType::Put,
            maturity: 1.0,
            exercise_count: 4,
            moneyness: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsBlock {
    pub n_train: usize,
    pub n_validation: usize,
    pub seed_train: u64,
    pub seed_validation: u64,
}

impl Default for PathsBlock {
    fn default() -> Self {
        PathsBlock {
            n_train: 50_000,
            n_validation: 5_000,
            seed_train: 2024,
            seed_validation: 9001,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeBlock {
    /// Largest per-layer epoch budget in the race.
    pub max_epochs: usize,
    /// Absolute price-error threshold whose first crossing is reported.
    pub threshold: f64,
    /// Training paths per race run.
    pub n_paths: usize,
    /// One full race per seed.
    pub seeds: Vec<u64>,
}

impl Default for ConvergeBlock {
    fn default() -> Self {
        ConvergeBlock {
            max_epochs: 12,
            threshold: 1e-3,
            n_paths: 20_000,
            seeds: vec![11, 23, 37, 41, 53],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureBlock {
    /// Confidence level of the potential-future-exposure quantile.
    pub quantile: f64,
}

impl Default for ExposureBlock {
    fn default() -> Self {
        ExposureBlock { quantile: 0.99 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineBlock {
    /// Pieces each exercise interval is cut into on the fine grid; 2 adds
    /// the interval midpoints.
    pub subdivisions: usize,
}

impl Default for FineBlock {
    fn default() -> Self {
        FineBlock { subdivisions: 2 }
    }
}

impl ExperimentConfig {
    /// Read a TOML file, or the built-in defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let config = match path {
            None => ExperimentConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| bad(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| bad(format!("cannot parse {}: {e}", p.display())))?
            }
        };
        config.validate()?;
        Ok(config)
    }

    /// `--seed N` re-seeds the training stream with N and the validation
    /// stream with a far-away offset so the two never collide.
    pub fn override_seed(&mut self, seed: u64) {
        self.paths.seed_train = seed;
        self.paths.seed_validation = seed.wrapping_add(1_000_003);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.market.validate().map_err(|e| bad(e.to_string()))?;
        self.contract_spec().validate().map_err(|e| bad(e.to_string()))?;
        self.training.validate().map_err(|e| bad(e.to_string()))?;
        self.cos.validate().map_err(|e| bad(e.to_string()))?;
        if self.contract.moneyness <= 0.0 {
            return Err(bad("contract.moneyness must be > 0"));
        }
        if self.paths.n_validation < 100 {
            return Err(bad("paths.n_validation must be >= 100"));
        }
        if self.paths.n_train < 100 {
            return Err(bad("paths.n_train must be >= 100"));
        }
        if self.converge.max_epochs == 0 || self.converge.n_paths < 100 {
            return Err(bad("converge.max_epochs must be >= 1 and converge.n_paths >= 100"));
        }
        if !(self.converge.threshold > 0.0) {
            return Err(bad("converge.threshold must be > 0"));
        }
        if self.converge.seeds.is_empty() {
            return Err(bad("converge.seeds must not be empty"));
        }
        if !(self.exposure.quantile > 0.0 && self.exposure.quantile < 1.0) {
            return Err(bad("exposure.quantile must lie in (0, 1)"));
        }
        if self.fine.subdivisions < 2 {
            return Err(bad("fine.subdivisions must be >= 2"));
        }
        if self.scenarios.is_empty() {
            return Err(bad("scenarios must not be empty"));
        }
        for (i, sc) in self.scenarios.iter().enumerate() {
            if !(sc.mu.is_finite() && sc.sigma_real.is_finite() && sc.sigma_real >= 0.0) {
                return Err(bad(format!("scenario {} has invalid parameters", i + 1)));
            }
        }
        Ok(())
    }

    /// The contract the configuration describes.
    pub fn contract_spec(&self) -> BermudanSpec {
        let k = self.contract.exercise_count.max(1);
        let dt = self.contract.maturity / k as f64;
        BermudanSpec {
            strike: self.contract.moneyness * self.market.s0,
            side: self.contract.side,
            exercise_times: (1..=k).map(|i| i as f64 * dt).collect(),
        }
    }

    /// Exercise dates plus `subdivisions - 1` evenly spaced interior points
    /// per interval (the stub from time zero included).
    pub fn fine_horizons(&self) -> Vec<f64> {
        let dates = self.contract_spec().exercise_times;
        let k = self.fine.subdivisions;
        let mut out = Vec::with_capacity(dates.len() * k);
        let mut prev = 0.0;
        for &t in &dates {
            for i in 1..=k {
                out.push(prev + (t - prev) * i as f64 / k as f64);
            }
            // The date itself must be grid-exact for the stopping rule, so
            // overwrite the last subdivision point with it.
            *out.last_mut().expect("non-empty") = t;
            prev = t;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_describe_a_quarterly_put() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let spec = cfg.contract_spec();
        assert_eq!(spec.exercise_times, vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(spec.strike, 1.0);
        assert_eq!(spec.side, OptionType::Put);
    }

    #[test]
    fn fine_horizons_with_two_subdivisions_are_the_midpoint_grid() {
        let cfg = ExperimentConfig::default();
        assert_eq!(
            cfg.fine_horizons(),
            bermudan::exposure::horizons_with_midpoints(&cfg.contract_spec().exercise_times)
        );
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let err = toml::from_str::<ExperimentConfig>("[market]\ns0 = 1.0\nbogus = 2\n");
        assert!(err.is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.paths.n_validation = 99;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.contract.moneyness = -1.0;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.scenarios.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seed_override_moves_both_streams() {
        let mut cfg = ExperimentConfig::default();
        cfg.override_seed(7);
        assert_eq!(cfg.paths.seed_train, 7);
        assert_eq!(cfg.paths.seed_validation, 1_000_010);
    }

    #[test]
    fn partial_toml_keeps_defaults_elsewhere() {
        let cfg: ExperimentConfig =
            toml::from_str("[contract]\nmoneyness = 1.1\n").unwrap();
        assert_eq!(cfg.contract.moneyness, 1.1);
        assert_eq!(cfg.paths.n_train, 50_000);
        assert_eq!(cfg.scenarios.len(), 4);
    }
}
