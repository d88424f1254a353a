use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::cas::Instance;
use crate::evolve::{run_static, DynamicParams, EaConfig};
use crate::seeding;

/// Root seed of every reference run; mixed with the instance id.
pub const IDEAL_SEED: u64 = 0x1DEA_15EE_D000_0001;

/// Reference fitness: best of a static run with twice the generation budget.
pub fn compute_ideal(instance: &Instance, config: &EaConfig, params: &DynamicParams) -> Result<f64, EnvError> {
    let doubled = EaConfig {
        max_generations: 2 * config.max_generations,
        rng_seed: seeding::mix_str(IDEAL_SEED, &instance.id),
        ..*config
    };
    Ok(run_static(instance, &doubled, params)?.best_fitness)
}

/// Per-dataset map from instance id to reference fitness.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdealCache {
    pub population_size: usize,
    pub max_generations: usize,
    pub ideal: BTreeMap<String, f64>,
}

impl IdealCache {
    pub fn new(config: &EaConfig) -> Self {
        Self {
            population_size: config.population_size,
            max_generations: config.max_generations,
            ideal: BTreeMap::new(),
        }
    }

    fn matches(&self, config: &EaConfig) -> bool {
        self.population_size == config.population_size && self.max_generations == config.max_generations
    }

    /// Cached value for `instance`, computing it on first use.
    pub fn get_or_compute(
        &mut self,
        instance: &Instance,
        config: &EaConfig,
        params: &DynamicParams,
    ) -> Result<f64, EnvError> {
        if !self.matches(config) {
            return Err(EnvError::Cache(format!(
                "cache built for rho={}, gamma={}; requested rho={}, gamma={}",
                self.population_size, self.max_generations, config.population_size, config.max_generations
            )));
        }
        if let Some(&v) = self.ideal.get(&instance.id) {
            return Ok(v);
        }
        let v = compute_ideal(instance, config, params)?;
        self.ideal.insert(instance.id.clone(), v);
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<(), EnvError> {
        let text = toml::to_string(self).map_err(|e| EnvError::Cache(e.to_string()))?;
        crate::fsutil::write_atomic(path, text.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EnvError> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| EnvError::Cache(format!("{}: {e}", path.display())))
    }
}
