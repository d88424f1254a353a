//! Configuration file covering every tunable constant of the pipeline.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::Variant;
use crate::evolve::{DynamicParams, EaConfig};
use crate::instgen::{DatasetSpec, GeneratorParams};
use crate::ppo::PpoHyperparams;
use crate::tuner::{BudgetUnit, TpeSettings, TuningBudget};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetsConfig {
    /// Family names such as `M1T1` or `CAS-PFSP-M1T1`.
    pub families: Vec<String>,
    pub instances_per_dataset: usize,
    /// Extra instances generated per known-role dataset to draw training
    /// instances from.
    pub extra_training: usize,
    pub training_per_dataset: usize,
}

impl Default for DatasetsConfig {
    fn default() -> Self {
        Self {
            families: ["M1T1", "M1T3", "M3T1", "M3T3", "M5T1", "M5T3", "M10T1", "M10T3", "M15T1", "M15T3"]
                .map(String::from)
                .to_vec(),
            instances_per_dataset: 50,
            extra_training: 3,
            training_per_dataset: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub population_size: usize,
    pub max_generations: usize,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            population_size: 250,
            max_generations: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdealConfig {
    /// Static parameters of the doubled-budget reference run.
    pub params: DynamicParams,
}

impl Default for IdealConfig {
    fn default() -> Self {
        Self {
            params: DynamicParams::TUNED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub total_steps: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { total_steps: 4_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerConfig {
    pub tpe: TpeSettings,
    pub budget: TuningBudget,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            tpe: TpeSettings::default(),
            budget: TuningBudget {
                total_iterations: 4_000_000,
                trials: 333,
                instances_per_trial: 12,
                generations_per_trial: 100,
                repetitions: 1,
                unit: BudgetUnit::Generations,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub variants: Vec<Variant>,
    pub repetitions: usize,
    /// Evaluate only the first `n` instances of each dataset.
    pub instance_limit: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            repetitions: 10,
            instance_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub generator: GeneratorParams,
    pub datasets: DatasetsConfig,
    pub algorithm: AlgorithmConfig,
    pub ideal: IdealConfig,
    pub ppo: PpoHyperparams,
    pub training: TrainingConfig,
    pub tuner: TunerConfig,
    pub bench: BenchConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 2024,
            workers: 0,
            generator: GeneratorParams::default(),
            datasets: DatasetsConfig::default(),
            algorithm: AlgorithmConfig::default(),
            ideal: IdealConfig::default(),
            ppo: PpoHyperparams::default(),
            training: TrainingConfig::default(),
            tuner: TunerConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is serialisable")
    }

    pub fn ea_config(&self) -> EaConfig {
        EaConfig::new(self.algorithm.population_size, self.algorithm.max_generations, self.seed)
    }

    /// Dataset specs for the configured families.
    pub fn dataset_specs(&self) -> Result<Vec<DatasetSpec>, ConfigError> {
        self.datasets
            .families
            .iter()
            .map(|f| {
                let mut spec = DatasetSpec::by_name(f, self.seed)
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown dataset family {f:?}")))?;
                spec.instance_count = self.datasets.instances_per_dataset;
                Ok(spec)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.ea_config().validate().map_err(|e| invalid(&e))?;
        self.ideal.params.validate().map_err(|e| invalid(&e))?;
        self.ppo.validate().map_err(|e| invalid(&e))?;
        self.tuner.budget.validate().map_err(|e| invalid(&e))?;
        self.dataset_specs()?;
        if self.bench.repetitions == 0 || self.bench.variants.is_empty() {
            return Err(ConfigError::Invalid("bench needs repetitions >= 1 and a variant".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        let text = c.to_toml_string();
        assert_eq!(Config::from_toml_str(&text, "default").unwrap(), c);
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let c = Config::from_toml_str("seed = 7\n[algorithm]\npopulation_size = 30\n", "t").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.algorithm.population_size, 30);
        assert_eq!(c.algorithm.max_generations, 100);
        assert_eq!(c.ppo, PpoHyperparams::default());
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(matches!(Config::from_toml_str("sed = 7\n", "t"), Err(ConfigError::Parse { .. })));
        assert!(matches!(
            Config::from_toml_str("[datasets]\nfamilies = [\"M2T2\"]\n", "t"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            Config::from_toml_str("[algorithm]\npopulation_size = 1\n", "t"),
            Err(ConfigError::Invalid(_))
        ));
    }
}
