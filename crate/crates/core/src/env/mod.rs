//! The memetic algorithm as a sequential decision environment.
//!
//! One step is one generation: the agent emits a 7-dimensional action in
//! `[-1, 1]`, which is rescaled to the variation parameters used for that
//! generation. The observation is a 5-dimensional summary of search
//! progress and the reward is the gain in squared normalised improvement of
//! the best-so-far fitness.

mod action;
mod ideal;
mod reward;

pub use action::{rescale_action, unscale_params, ActionVector, ACTION_BOUNDS, ACTION_DIM};
pub use ideal::{compute_ideal, IdealCache, IDEAL_SEED};
pub use reward::{reward, RewardTracker};

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::cas::Instance;
use crate::evolve::{EaConfig, EvolveError, MemeticRun, Population, RunResult};
use crate::seeding::{self, StreamRng};

pub const OBS_DIM: usize = 5;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("action component {index} = {value} is outside [-1, 1]")]
    OutOfBounds { index: usize, value: f64 },
    #[error("action component {index} is not finite")]
    NonFiniteAction { index: usize },
    #[error("population is empty")]
    EmptyPopulation,
    #[error("normaliser must be positive, got {0}")]
    NonPositiveNormalizer(f64),
    #[error("f_initial = {f_initial} does not exceed f_ideal = {f_ideal}")]
    DegenerateNormalization { f_initial: f64, f_ideal: f64 },
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("episode not started; call reset first")]
    NotStarted,
    #[error("instance pool is empty")]
    EmptyPool,
    #[error("{0}")]
    Cache(String),
    #[error("controller failed: {0}")]
    Controller(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Normalised search-state summary; every component lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub norm_best: f64,
    pub norm_mean: f64,
    pub coeff_variation: f64,
    pub remaining_budget: f64,
    pub stagnation: f64,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        [
            self.norm_best,
            self.norm_mean,
            self.coeff_variation,
            self.remaining_budget,
            self.stagnation,
        ]
    }

    pub fn from_array(v: [f64; OBS_DIM]) -> Self {
        Self {
            norm_best: v[0],
            norm_mean: v[1],
            coeff_variation: v[2],
            remaining_budget: v[3],
            stagnation: v[4],
        }
    }

    pub fn in_unit_box(&self) -> bool {
        self.to_array().iter().all(|x| (0.0..=1.0).contains(x))
    }
}

fn unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// Builds the observation for `population` at `generation`.
///
/// Ratios are clamped to `[0, 1]`: the mean can exceed the initial best and
/// the coefficient of variation is unbounded in general.
pub fn observe(
    population: &Population,
    generation: usize,
    config: &EaConfig,
    f_initial: f64,
    stagnation_count: usize,
) -> Result<Observation, EnvError> {
    if population.is_empty() {
        return Err(EnvError::EmptyPopulation);
    }
    if !(f_initial > 0.0) {
        return Err(EnvError::NonPositiveNormalizer(f_initial));
    }
    let stats = population.stats();
    let budget = config.max_generations.max(1) as f64;
    let cv = if stats.mean > 0.0 { stats.std / stats.mean } else { 0.0 };
    Ok(Observation {
        norm_best: unit(stats.best / f_initial),
        norm_mean: unit(stats.mean / f_initial),
        coeff_variation: unit(cv),
        remaining_budget: unit(config.max_generations.saturating_sub(generation) as f64 / budget),
        stagnation: unit(stagnation_count as f64 / budget),
    })
}

/// Training instance with its cached reference fitness.
#[derive(Debug, Clone)]
pub struct PoolEntry {
    pub instance: Arc<Instance>,
    pub f_ideal: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
struct Episode {
    entry: usize,
    run: MemeticRun,
    tracker: RewardTracker,
    normalizer: f64,
    stagnation: usize,
}

/// Environment over a pool of instances.
///
/// Each `reset` draws an instance uniformly from the pool and a fresh
/// algorithm seed from the environment's own stream.
#[derive(Debug, Clone)]
pub struct DacEnv {
    pool: Vec<PoolEntry>,
    config: EaConfig,
    rng: StreamRng,
    episode: Option<Episode>,
}

impl DacEnv {
    pub fn new(pool: Vec<PoolEntry>, config: EaConfig, seed: u64) -> Result<Self, EnvError> {
        if pool.is_empty() {
            return Err(EnvError::EmptyPool);
        }
        config.validate()?;
        Ok(Self {
            pool,
            config,
            rng: seeding::stream(seed, &[]),
            episode: None,
        })
    }

    pub fn config(&self) -> &EaConfig {
        &self.config
    }

    pub fn pool(&self) -> &[PoolEntry] {
        &self.pool
    }

    /// Index into the pool of the current episode's instance.
    pub fn current_entry(&self) -> Option<usize> {
        self.episode.as_ref().map(|e| e.entry)
    }

    pub fn tracker(&self) -> Option<&RewardTracker> {
        self.episode.as_ref().map(|e| &e.tracker)
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.episode.as_ref().map(|e| e.run.best().fitness)
    }

    pub fn is_done(&self) -> bool {
        self.episode.as_ref().is_none_or(|e| e.run.is_finished())
    }

    /// Starts a new episode.
    pub fn reset(&mut self) -> Result<Observation, EnvError> {
        let entry = self.rng.random_range(0..self.pool.len());
        let seed = self.rng.random::<u64>();
        let instance = Arc::clone(&self.pool[entry].instance);
        let run = MemeticRun::new(&instance, self.config.with_seed(seed))?;
        let f_initial = run.best().fitness;
        let tracker = RewardTracker::new(f_initial, self.pool[entry].f_ideal);
        // An instance whose random start already emits nothing is solved;
        // the episode still runs but every reward is zero.
        let normalizer = if f_initial > 0.0 { f_initial } else { f64::MIN_POSITIVE };
        let obs = observe(run.population(), 0, &self.config, normalizer, 0)?;
        self.episode = Some(Episode {
            entry,
            run,
            tracker,
            normalizer,
            stagnation: 0,
        });
        Ok(obs)
    }

    /// Applies `action` for one generation. Components are clipped to
    /// `[-1, 1]` before rescaling.
    pub fn step(&mut self, action: &ActionVector) -> Result<StepOutcome, EnvError> {
        let episode = self.episode.as_mut().ok_or(EnvError::NotStarted)?;
        if episode.run.is_finished() {
            return Err(EnvError::EpisodeFinished);
        }
        let params = rescale_action(&action.clipped()?)?;
        let instance = &self.pool[episode.entry].instance;
        let before = episode.run.best().fitness;
        episode.run.step(instance, &params)?;
        let after = episode.run.best().fitness;
        if after < before {
            episode.stagnation = 0;
        } else {
            episode.stagnation += 1;
        }
        let reward = match episode.tracker.update(after) {
            Ok(r) => r,
            Err(EnvError::DegenerateNormalization { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        let observation = observe(
            episode.run.population(),
            episode.run.generation(),
            &self.config,
            episode.normalizer,
            episode.stagnation,
        )?;
        Ok(StepOutcome {
            observation,
            reward,
            done: episode.run.is_finished(),
        })
    }
}

/// Runs one algorithm instance to completion, asking `controller` for an
/// action before every generation.
pub fn run_controlled<F>(instance: &Instance, config: &EaConfig, mut controller: F) -> Result<RunResult, EnvError>
where
    F: FnMut(&Observation) -> Result<ActionVector, EnvError>,
{
    let mut run = MemeticRun::new(instance, *config)?;
    let f_initial = run.best().fitness;
    let normalizer = if f_initial > 0.0 { f_initial } else { f64::MIN_POSITIVE };
    let mut stagnation = 0usize;
    while !run.is_finished() {
        let obs = observe(run.population(), run.generation(), config, normalizer, stagnation)?;
        let params = rescale_action(&controller(&obs)?.clipped()?)?;
        let before = run.best().fitness;
        run.step(instance, &params)?;
        if run.best().fitness < before {
            stagnation = 0;
        } else {
            stagnation += 1;
        }
    }
    Ok(run.into_result())
}

/// One row of an episode trace.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub step: usize,
    pub action: ActionVector,
    pub reward: f64,
    pub observation: Observation,
}

/// CSV with columns `step,action_0..action_6,reward,<observation components>`.
pub fn episode_to_csv(records: &[EpisodeRecord]) -> String {
    let mut out = String::from("step");
    for i in 0..ACTION_DIM {
        out.push_str(&format!(",action_{i}"));
    }
    out.push_str(",reward,norm_best,norm_mean,coeff_variation,remaining_budget,stagnation\n");
    for r in records {
        out.push_str(&r.step.to_string());
        for a in r.action.0 {
            out.push_str(&format!(",{a}"));
        }
        out.push_str(&format!(",{}", r.reward));
        for o in r.observation.to_array() {
            out.push_str(&format!(",{o}"));
        }
        out.push('\n');
    }
    out
}
