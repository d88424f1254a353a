//! Actor-critic training with the clipped-surrogate objective.
//!
//! Everything is written out by hand in `f64`: the networks, their backward
//! passes, Adam, generalised advantage estimation and the update loop.

mod buffer;
mod mlp;
mod policy;
mod update;

pub use buffer::{normalize_advantages, RolloutBuffer};
pub use mlp::{Mlp, MlpCache};
pub use policy::{act, gaussian_log_prob, sample, PolicyGrad, PolicyNetwork, Sampled, LOG_STD_MAX, LOG_STD_MIN};
pub use update::{loss_and_gradient, ppo_update, Adam, LossReport, Minibatch, PpoHyperparams};

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{DacEnv, EnvError, Observation, PoolEntry, ACTION_BOUNDS};
use crate::evolve::EaConfig;
use crate::fsutil::write_atomic;
use crate::seeding;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("policy produced a non-finite output")]
    NonFiniteOutput,
    #[error(
        "non-finite loss in epoch {epoch}, minibatch {batch}: policy loss {policy_loss}, value loss {value_loss}, gradient norm {grad_norm}"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        policy_loss: f64,
        value_loss: f64,
        grad_norm: f64,
    },
    #[error("rollout buffer is empty or has no advantages")]
    EmptyBuffer,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("policy file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const POLICY_FORMAT_VERSION: u32 = 1;

const INIT_STREAM: u64 = 1;
const ENV_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;
const SHUFFLE_STREAM: u64 = 4;

/// Episodes averaged for each learning-curve point.
pub const CURVE_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub seed: u64,
    pub total_steps: u64,
    pub env_steps: u64,
    pub updates: u64,
    pub episodes: u64,
    pub instance_ids: Vec<String>,
    pub population_size: usize,
    pub max_generations: usize,
    pub hyperparams: PpoHyperparams,
}

/// A policy file: weights, the spaces it was trained on, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPolicy {
    pub format_version: u32,
    /// Observation components in input order; each already lies in `[0, 1]`.
    pub observation: Vec<String>,
    /// Parameter ranges that actions in `[-1, 1]` map onto.
    pub action_bounds: Vec<(f64, f64)>,
    pub network: PolicyNetwork,
    pub manifest: TrainingManifest,
}

impl TrainedPolicy {
    pub fn new(network: PolicyNetwork, manifest: TrainingManifest) -> Self {
        Self {
            format_version: POLICY_FORMAT_VERSION,
            observation: ["norm_best", "norm_mean", "coeff_variation", "remaining_budget", "stagnation"]
                .map(String::from)
                .to_vec(),
            action_bounds: ACTION_BOUNDS.to_vec(),
            network,
            manifest,
        }
    }

    pub fn to_json(&self) -> Result<String, PpoError> {
        serde_json::to_string_pretty(self).map_err(|e| PpoError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, PpoError> {
        let p: Self = serde_json::from_str(text).map_err(|e| PpoError::Format(e.to_string()))?;
        if p.format_version != POLICY_FORMAT_VERSION {
            return Err(PpoError::Format(format!(
                "unsupported format version {} (expected {POLICY_FORMAT_VERSION})",
                p.format_version
            )));
        }
        if p.action_bounds != ACTION_BOUNDS.to_vec() {
            return Err(PpoError::Format("action bounds differ from this build".into()));
        }
        if !p.network.is_finite() {
            return Err(PpoError::Format("weights are not finite".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), PpoError> {
        write_atomic(path, self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PpoError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Deterministic action for deployment.
    pub fn action(&self, obs: &Observation) -> Result<crate::env::ActionVector, PpoError> {
        // Deterministic mode never touches the generator.
        act(&self.network, obs, true, &mut seeding::stream(0, &[]))
    }
}

/// One point per update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub update_index: usize,
    pub env_steps: u64,
    /// Mean reward of the last [`CURVE_WINDOW`] completed episodes; NaN
    /// before the first episode completes.
    pub mean_episode_reward: f64,
    pub loss: LossReport,
}

pub fn curve_to_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("update_index,env_steps,mean_episode_reward\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", p.update_index, p.env_steps, p.mean_episode_reward));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainingOutput {
    pub policy: TrainedPolicy,
    pub curve: Vec<CurvePoint>,
    /// Undiscounted, unscaled return of every completed episode in order.
    pub episode_rewards: Vec<f64>,
}

pub fn train(
    pool: Vec<PoolEntry>,
    total_steps: u64,
    config: &EaConfig,
    hp: &PpoHyperparams,
    seed: u64,
) -> Result<TrainingOutput, PpoError> {
    train_with_progress(pool, total_steps, config, hp, seed, |_| {})
}

/// [`train`] with a callback after every update.
pub fn train_with_progress<F: FnMut(&CurvePoint)>(
    pool: Vec<PoolEntry>,
    total_steps: u64,
    config: &EaConfig,
    hp: &PpoHyperparams,
    seed: u64,
    mut progress: F,
) -> Result<TrainingOutput, PpoError> {
    hp.validate()?;
    let instance_ids = pool.iter().map(|e| e.instance.id.clone()).collect();
    let mut policy = PolicyNetwork::for_env(&hp.hidden, &mut seeding::stream(seed, &[INIT_STREAM]));
    let mut optimizer = Adam::new(policy.param_len());
    let mut envs = (0..hp.n_envs)
        .map(|e| DacEnv::new(pool.clone(), *config, seeding::derive(seed, &[ENV_STREAM, e as u64])))
        .collect::<Result<Vec<_>, _>>()?;
    let mut sample_rng = seeding::stream(seed, &[SAMPLE_STREAM]);
    let mut shuffle_rng = seeding::stream(seed, &[SHUFFLE_STREAM]);

    let mut obs: Vec<Vec<f64>> = envs
        .iter_mut()
        .map(|e| e.reset().map(|o| o.to_array().to_vec()))
        .collect::<Result<_, _>>()?;
    let mut running = vec![0.0; hp.n_envs];
    let mut episode_rewards = Vec::new();
    let mut curve = Vec::new();
    let mut buffer = RolloutBuffer::new(hp.n_envs);
    let mut env_steps = 0u64;

    while env_steps < total_steps {
        buffer.clear();
        for _ in 0..hp.n_steps {
            let draws = obs
                .iter()
                .map(|o| sample(&policy, o, &mut sample_rng))
                .collect::<Result<Vec<_>, _>>()?;
            let outcomes = envs
                .par_iter_mut()
                .zip(&draws)
                .map(|(env, d)| -> Result<_, EnvError> {
                    let out = env.step(&d.action)?;
                    let next = if out.done { env.reset()? } else { out.observation };
                    Ok((out.reward, out.done, next))
                })
                .collect::<Result<Vec<_>, _>>()?;
            for (e, (d, (reward, done, next))) in draws.into_iter().zip(outcomes).enumerate() {
                running[e] += reward;
                if done {
                    episode_rewards.push(running[e]);
                    running[e] = 0.0;
                }
                let o = std::mem::replace(&mut obs[e], next.to_array().to_vec());
                buffer.push(o, d.raw, d.log_prob, reward * hp.reward_scale, d.value, done);
            }
            env_steps += hp.n_envs as u64;
        }
        let last: Vec<f64> = obs.iter().map(|o| policy.value(o)).collect();
        buffer.compute_gae(&last, hp.gamma, hp.gae_lambda);
        let loss = ppo_update(&mut policy, &mut optimizer, &buffer, hp, &mut shuffle_rng)?;
        let window = &episode_rewards[episode_rewards.len().saturating_sub(CURVE_WINDOW)..];
        let point = CurvePoint {
            update_index: curve.len(),
            env_steps,
            mean_episode_reward: if window.is_empty() {
                f64::NAN
            } else {
                window.iter().sum::<f64>() / window.len() as f64
            },
            loss,
        };
        progress(&point);
        curve.push(point);
    }

    let manifest = TrainingManifest {
        seed,
        total_steps,
        env_steps,
        updates: curve.len() as u64,
        episodes: episode_rewards.len() as u64,
        instance_ids,
        population_size: config.population_size,
        max_generations: config.max_generations,
        hyperparams: hp.clone(),
    };
    Ok(TrainingOutput {
        policy: TrainedPolicy::new(policy, manifest),
        curve,
        episode_rewards,
    })
}
