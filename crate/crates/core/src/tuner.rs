//! Static parameter tuning with a tree-structured Parzen estimator.
//!
//! Each trial evaluates one parameter vector on every tuning instance and
//! scores it by the mean best fitness. Every trial reuses the same run seed
//! for a given instance, so trials differ only in their parameters.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::cas::Instance;
use crate::env::ACTION_BOUNDS;
use crate::evolve::{run_static, DynamicParams, EaConfig, EvolveError};
use crate::fsutil::write_atomic;
use crate::seeding;

#[derive(Debug, Error)]
pub enum TunerError {
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("invalid tuning budget: {0}")]
    InvalidBudget(String),
    #[error("need {required} tuning instances, got {available}")]
    NotEnoughInstances { required: usize, available: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Sampler constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeSettings {
    /// Trials drawn uniformly before the density model is used.
    pub n_startup: usize,
    /// Fraction of trials forming the good set.
    pub good_fraction: f64,
    pub n_candidates: usize,
    /// Smallest kernel bandwidth as a fraction of the parameter range.
    pub min_bandwidth: f64,
}

impl Default for TpeSettings {
    fn default() -> Self {
        Self {
            n_startup: 20,
            good_fraction: 0.25,
            n_candidates: 24,
            min_bandwidth: 0.01,
        }
    }
}

/// Counter that enforces [`TuningBudget::total_iterations`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetUnit {
    /// One generation of one run.
    Generations,
    /// One individual evaluated in one generation (generations x population).
    Evaluations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningBudget {
    /// Cap on consumed iterations in `unit`; 0 disables the cap.
    pub total_iterations: u64,
    pub trials: usize,
    pub instances_per_trial: usize,
    pub generations_per_trial: usize,
    /// Independent runs per instance in a trial; objectives are their mean.
    #[serde(default = "one")]
    pub repetitions: usize,
    pub unit: BudgetUnit,
}

fn one() -> usize {
    1
}

/// Budget arithmetic, logged before tuning starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetAccount {
    pub declared_trials: usize,
    pub effective_trials: usize,
    pub generations_per_trial: u64,
    pub evaluations_per_trial: u64,
    pub generations_total: u64,
    pub evaluations_total: u64,
    pub cap: u64,
    pub unit: BudgetUnit,
}

impl std::fmt::Display for BudgetAccount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "trials {} of {} declared; per trial {} generations / {} evaluations; total {} generations / {} evaluations; cap {} ({})",
            self.effective_trials,
            self.declared_trials,
            self.generations_per_trial,
            self.evaluations_per_trial,
            self.generations_total,
            self.evaluations_total,
            if self.cap == 0 { "none".to_string() } else { self.cap.to_string() },
            match self.unit {
                BudgetUnit::Generations => "generations",
                BudgetUnit::Evaluations => "evaluations",
            }
        )
    }
}

impl TuningBudget {
    pub fn validate(&self) -> Result<(), TunerError> {
        if self.trials == 0 || self.instances_per_trial == 0 || self.repetitions == 0 {
            return Err(TunerError::InvalidBudget(
                "trials, instances_per_trial and repetitions must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Trial count after applying the cap for a population of `population_size`.
    pub fn account(&self, population_size: usize) -> Result<BudgetAccount, TunerError> {
        self.validate()?;
        let gens = (self.instances_per_trial * self.repetitions * self.generations_per_trial) as u64;
        let evals = gens * population_size as u64;
        let per_trial = match self.unit {
            BudgetUnit::Generations => gens,
            BudgetUnit::Evaluations => evals,
        };
        let mut effective = self.trials;
        if self.total_iterations > 0 && per_trial > 0 {
            effective = effective.min((self.total_iterations / per_trial) as usize);
        }
        if effective == 0 {
            return Err(TunerError::InvalidBudget(format!(
                "cap of {} is smaller than one trial ({per_trial})",
                self.total_iterations
            )));
        }
        Ok(BudgetAccount {
            declared_trials: self.trials,
            effective_trials: effective,
            generations_per_trial: gens,
            evaluations_per_trial: evals,
            generations_total: gens * effective as u64,
            evaluations_total: evals * effective as u64,
            cap: self.total_iterations,
            unit: self.unit,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: DynamicParams,
    /// Best fitness per instance, in instance order.
    pub objectives: Vec<f64>,
    pub score: f64,
}

fn in_bounds(x: f64, d: usize) -> bool {
    let (lo, hi) = ACTION_BOUNDS[d];
    (lo..=hi).contains(&x)
}

fn uniform_params<R: Rng + ?Sized>(rng: &mut R) -> DynamicParams {
    DynamicParams::from_array(std::array::from_fn(|d| {
        let (lo, hi) = ACTION_BOUNDS[d];
        let u: f64 = rng.random();
        (1.0 - u) * lo + u * hi
    }))
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Gaussian kernel density truncated to `[lo, hi]`.
#[derive(Debug, Clone)]
struct Parzen {
    centers: Vec<f64>,
    bandwidth: f64,
    lo: f64,
    hi: f64,
    /// Kernel mass inside the bounds, per center.
    mass: Vec<f64>,
}

impl Parzen {
    fn fit(centers: Vec<f64>, lo: f64, hi: f64, min_bandwidth: f64) -> Self {
        let n = centers.len() as f64;
        let mean = centers.iter().sum::<f64>() / n;
        let sd = if centers.len() > 1 {
            (centers.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let range = hi - lo;
        let bandwidth = (1.06 * sd * n.powf(-0.2)).clamp(min_bandwidth * range, range);
        let mass = centers
            .iter()
            .map(|c| std_normal_cdf((hi - c) / bandwidth) - std_normal_cdf((lo - c) / bandwidth))
            .collect();
        Self {
            centers,
            bandwidth,
            lo,
            hi,
            mass,
        }
    }

    fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = (2.0 * std::f64::consts::PI).sqrt() * h;
        self.centers
            .iter()
            .zip(&self.mass)
            .map(|(c, m)| (-0.5 * ((x - c) / h).powi(2)).exp() / (norm * m))
            .sum::<f64>()
            / self.centers.len() as f64
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let c = self.centers[rng.random_range(0..self.centers.len())];
        for _ in 0..64 {
            let x = c + self.bandwidth * rng.sample::<f64, _>(StandardNormal);
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        c.clamp(self.lo, self.hi)
    }
}

/// Next parameter vector to evaluate given `history`.
pub fn suggest<R: Rng + ?Sized>(history: &[Trial], settings: &TpeSettings, rng: &mut R) -> DynamicParams {
    if history.len() < settings.n_startup.max(2) {
        return uniform_params(rng);
    }
    let mut order: Vec<&Trial> = history.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.index.cmp(&b.index)));
    let n_good = ((settings.good_fraction * order.len() as f64).ceil() as usize).clamp(1, order.len() - 1);
    let (good, bad) = order.split_at(n_good);
    let models: Vec<(Parzen, Parzen)> = (0..ACTION_BOUNDS.len())
        .map(|d| {
            let (lo, hi) = ACTION_BOUNDS[d];
            let column = |set: &[&Trial]| set.iter().map(|t| t.params.to_array()[d].clamp(lo, hi)).collect();
            (
                Parzen::fit(column(good), lo, hi, settings.min_bandwidth),
                Parzen::fit(column(bad), lo, hi, settings.min_bandwidth),
            )
        })
        .collect();
    let mut best: Option<([f64; 7], f64)> = None;
    for _ in 0..settings.n_candidates.max(1) {
        let x: [f64; 7] = std::array::from_fn(|d| models[d].0.sample(rng));
        let score: f64 = models
            .iter()
            .zip(x)
            .map(|((l, g), v)| l.density(v).max(f64::MIN_POSITIVE).ln() - g.density(v).max(f64::MIN_POSITIVE).ln())
            .sum();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((x, score));
        }
    }
    let x = best.expect("at least one candidate").0;
    debug_assert!(x.iter().enumerate().all(|(d, &v)| in_bounds(v, d)));
    DynamicParams::from_array(x)
}

/// Seed of repetition `rep` on instance `index`, shared by every trial.
pub fn evaluation_seed(seed: u64, index: usize, rep: usize) -> u64 {
    seeding::derive(seed, &[EVAL_STREAM, index as u64, rep as u64])
}

const SUGGEST_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

/// Per-instance best fitness of `params`, averaged over `repetitions` runs.
pub fn evaluate_params(
    instances: &[Instance],
    config: &EaConfig,
    params: &DynamicParams,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<f64>, TunerError> {
    let runs = (0..instances.len())
        .flat_map(|i| (0..repetitions).map(move |r| (i, r)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, r)| Ok(run_static(&instances[i], &config.with_seed(evaluation_seed(seed, i, r)), params)?.best_fitness))
        .collect::<Result<Vec<f64>, TunerError>>()?;
    Ok(runs.chunks(repetitions).map(mean).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    pub best: Trial,
    pub history: Vec<Trial>,
    pub account: BudgetAccount,
}

/// Runs the budgeted trials. `population_size` comes from `config`;
/// the generation count and instance count come from `budget`.
pub fn run_tuning(
    instances: &[Instance],
    config: &EaConfig,
    budget: &TuningBudget,
    settings: &TpeSettings,
    seed: u64,
) -> Result<TuningResult, TunerError> {
    run_tuning_with_progress(instances, config, budget, settings, seed, |_| {})
}

pub fn run_tuning_with_progress<F: FnMut(&Trial)>(
    instances: &[Instance],
    config: &EaConfig,
    budget: &TuningBudget,
    settings: &TpeSettings,
    seed: u64,
    mut progress: F,
) -> Result<TuningResult, TunerError> {
    config.validate()?;
    let account = budget.account(config.population_size)?;
    if instances.len() < budget.instances_per_trial {
        return Err(TunerError::NotEnoughInstances {
            required: budget.instances_per_trial,
            available: instances.len(),
        });
    }
    let instances = &instances[..budget.instances_per_trial];
    let run_config = EaConfig {
        max_generations: budget.generations_per_trial,
        ..*config
    };
    let mut rng = seeding::stream(seed, &[SUGGEST_STREAM]);
    let mut history: Vec<Trial> = Vec::with_capacity(account.effective_trials);
    for index in 0..account.effective_trials {
        let params = suggest(&history, settings, &mut rng);
        let objectives = evaluate_params(instances, &run_config, &params, budget.repetitions, seed)?;
        let trial = Trial {
            index,
            params,
            score: mean(&objectives),
            objectives,
        };
        progress(&trial);
        history.push(trial);
    }
    let best = history
        .iter()
        .min_by(|a, b| a.score.total_cmp(&b.score))
        .cloned()
        .expect("at least one trial");
    Ok(TuningResult { best, history, account })
}

/// CSV with columns `trial_index,<seven parameters>,score`.
pub fn history_to_csv(history: &[Trial]) -> String {
    let mut out = String::from("trial_index");
    for n in DynamicParams::NAMES {
        out.push(',');
        out.push_str(n);
    }
    out.push_str(",score\n");
    for t in history {
        out.push_str(&t.index.to_string());
        for v in t.params.to_array() {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", t.score));
    }
    out
}

/// Writes `history.csv` and `best_params.toml` into `dir`.
pub fn save_results(dir: &Path, result: &TuningResult) -> Result<(), TunerError> {
    write_atomic(&dir.join("history.csv"), history_to_csv(&result.history).as_bytes())?;
    result.best.params.save(&dir.join("best_params.toml"))?;
    Ok(())
}
