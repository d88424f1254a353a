use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;

use super::EvolveError;

/// Fixed budget of a memetic run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub rng_seed: u64,
}

impl EaConfig {
    pub fn new(population_size: usize, max_generations: usize, rng_seed: u64) -> Self {
        Self {
            population_size,
            max_generations,
            rng_seed,
        }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        if self.population_size < 2 {
            return Err(EvolveError::InvalidConfig(format!(
                "population size must be at least 2, got {}",
                self.population_size
            )));
        }
        Ok(())
    }
}

impl Default for EaConfig {
    fn default() -> Self {
        Self::new(250, 100, 0)
    }
}

/// The seven variation parameters that may change every generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicParams {
    /// Fraction of offspring produced by crossover.
    pub crossover_rate: f64,
    /// Per-gene swap probability for job keys.
    pub job_swap_prob: f64,
    /// Per-gene swap probability for pause keys.
    pub pause_swap_prob: f64,
    /// Per-gene mutation probability for job keys.
    pub job_mutation_prob: f64,
    /// Per-gene mutation probability for pause keys.
    pub pause_mutation_prob: f64,
    /// Standard deviation of the job-key perturbation.
    pub job_mutation_std: f64,
    /// Standard deviation of the pause-key perturbation.
    pub pause_mutation_std: f64,
}

impl DynamicParams {
    pub const NAMES: [&'static str; 7] = [
        "crossover_rate",
        "job_swap_prob",
        "pause_swap_prob",
        "job_mutation_prob",
        "pause_mutation_prob",
        "job_mutation_std",
        "pause_mutation_std",
    ];

    /// Untuned setting commonly used for this algorithm.
    pub const DEFAULT: DynamicParams = DynamicParams {
        crossover_rate: 0.85,
        job_swap_prob: 0.5,
        pause_swap_prob: 0.5,
        job_mutation_prob: 0.05,
        pause_mutation_prob: 0.05,
        job_mutation_std: 0.2,
        pause_mutation_std: 0.2,
    };

    /// Reference statically tuned setting.
    pub const TUNED: DynamicParams = DynamicParams {
        crossover_rate: 0.885,
        job_swap_prob: 0.418,
        pause_swap_prob: 0.133,
        job_mutation_prob: 0.017,
        pause_mutation_prob: 0.014,
        job_mutation_std: 0.012,
        pause_mutation_std: 0.233,
    };

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.crossover_rate,
            self.job_swap_prob,
            self.pause_swap_prob,
            self.job_mutation_prob,
            self.pause_mutation_prob,
            self.job_mutation_std,
            self.pause_mutation_std,
        ]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        Self {
            crossover_rate: v[0],
            job_swap_prob: v[1],
            pause_swap_prob: v[2],
            job_mutation_prob: v[3],
            pause_mutation_prob: v[4],
            job_mutation_std: v[5],
            pause_mutation_std: v[6],
        }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let v = self.to_array();
        for (i, (&x, name)) in v.iter().zip(Self::NAMES).enumerate() {
            let ok = if i < 5 { (0.0..=1.0).contains(&x) } else { x.is_finite() && x > 0.0 };
            if !ok {
                return Err(EvolveError::ParameterOutOfRange { name, value: x });
            }
        }
        Ok(())
    }
}

impl DynamicParams {
    /// TOML table with one key per parameter.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::from("# Variation parameters of the memetic algorithm\n");
        for (name, v) in Self::NAMES.iter().zip(self.to_array()) {
            out.push_str(&format!("{name} = {v:?}\n"));
        }
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self, EvolveError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct File {
            #[serde(flatten)]
            params: DynamicParams,
        }
        let p = toml::from_str::<File>(text)
            .map_err(|e| EvolveError::ParamsFile(e.to_string()))?
            .params;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvolveError> {
        write_atomic(path, self.to_toml_string().as_bytes()).map_err(|e| EvolveError::ParamsFile(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, EvolveError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EvolveError::ParamsFile(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

impl Default for DynamicParams {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_settings_are_valid() {
        DynamicParams::DEFAULT.validate().unwrap();
        DynamicParams::TUNED.validate().unwrap();
        assert_eq!(DynamicParams::from_array(DynamicParams::TUNED.to_array()), DynamicParams::TUNED);
    }

    #[test]
    fn out_of_range_values_are_named() {
        let mut p = DynamicParams::DEFAULT;
        p.pause_mutation_std = 0.0;
        match p.validate() {
            Err(EvolveError::ParameterOutOfRange { name, .. }) => assert_eq!(name, "pause_mutation_std"),
            other => panic!("{other:?}"),
        }
        p = DynamicParams::DEFAULT;
        p.crossover_rate = 1.5;
        assert!(p.validate().is_err());
        assert!(EaConfig::new(1, 10, 0).validate().is_err());
        assert!(EaConfig::new(2, 0, 0).validate().is_ok());
    }

    #[test]
    fn params_file_round_trips_exactly() {
        let p = DynamicParams::from_array([0.61, 0.1 + 0.2, 0.05, 1e-3, 0.11, 0.008, 0.25]);
        let text = p.to_toml_string();
        assert_eq!(DynamicParams::from_toml_str(&text).unwrap(), p);
        assert!(matches!(
            DynamicParams::from_toml_str("crossover_rate = 0.5\n"),
            Err(EvolveError::ParamsFile(_))
        ));
        let bad = text.replace("crossover_rate = 0.61", "crossover_rate = 1.61");
        assert!(matches!(
            DynamicParams::from_toml_str(&bad),
            Err(EvolveError::ParameterOutOfRange { .. })
        ));
        let extra = format!("{text}foo = 1.0\n");
        assert!(DynamicParams::from_toml_str(&extra).is_err());
    }
}
