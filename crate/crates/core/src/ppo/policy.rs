use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpCache};
use super::PpoError;
use crate::env::{ActionVector, Observation, ACTION_DIM, OBS_DIM};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Gaussian actor with a state-independent log standard deviation, plus a
/// separate value network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNetwork {
    pub actor: Mlp,
    pub log_std: Vec<f64>,
    pub critic: Mlp,
}

/// Gradient with the same layout as [`PolicyNetwork::flat_params`].
#[derive(Debug, Clone)]
pub struct PolicyGrad {
    pub actor: Vec<f64>,
    pub log_std: Vec<f64>,
    pub critic: Vec<f64>,
}

impl PolicyGrad {
    pub fn zeros_like(p: &PolicyNetwork) -> Self {
        Self {
            actor: vec![0.0; p.actor.param_len()],
            log_std: vec![0.0; p.log_std.len()],
            critic: vec![0.0; p.critic.param_len()],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.actor.clone();
        v.extend_from_slice(&self.log_std);
        v.extend_from_slice(&self.critic);
        v
    }

    pub fn norm(&self) -> f64 {
        self.actor
            .iter()
            .chain(&self.log_std)
            .chain(&self.critic)
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.actor
            .iter_mut()
            .chain(self.log_std.iter_mut())
            .chain(self.critic.iter_mut())
            .for_each(|g| *g *= s);
    }
}

impl PolicyNetwork {
    /// Orthogonal initialisation: gain sqrt(2) on hidden layers, 0.01 on the
    /// action head, 1 on the value head; `log_std` starts at 0.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let sizes = |out: usize| {
            let mut s = vec![obs_dim];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let actor = Mlp::orthogonal(&sizes(act_dim), 2f64.sqrt(), 0.01, rng);
        let critic = Mlp::orthogonal(&sizes(1), 2f64.sqrt(), 1.0, rng);
        Self {
            actor,
            log_std: vec![0.0; act_dim],
            critic,
        }
    }

    /// Network sized for the environment's observation and action spaces.
    pub fn for_env<R: Rng + ?Sized>(hidden: &[usize], rng: &mut R) -> Self {
        Self::new(OBS_DIM, ACTION_DIM, hidden, rng)
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn param_len(&self) -> usize {
        self.actor.param_len() + self.log_std.len() + self.critic.param_len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = self.actor.params.clone();
        v.extend_from_slice(&self.log_std);
        v.extend_from_slice(&self.critic.params);
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_len(), "parameter vector length");
        let (a, rest) = flat.split_at(self.actor.param_len());
        let (s, c) = rest.split_at(self.log_std.len());
        self.actor.params.copy_from_slice(a);
        self.log_std.copy_from_slice(s);
        self.critic.params.copy_from_slice(c);
    }

    /// Mutable views in flat order, for optimisers.
    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.actor.params, &mut self.log_std, &mut self.critic.params]
    }

    pub fn is_finite(&self) -> bool {
        self.flat_params().iter().all(|p| p.is_finite())
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std
            .iter_mut()
            .for_each(|s| *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        self.actor.forward(obs)
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.critic.forward(obs)[0]
    }

    /// Log-density of `action` under the policy at `obs`.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> f64 {
        gaussian_log_prob(&self.mean(obs), &self.log_std, action)
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|s| 0.5 + HALF_LN_2PI + s).sum()
    }

    pub(crate) fn forward_cached(&self, obs: &[f64], actor: &mut MlpCache, critic: &mut MlpCache) {
        self.actor.forward_cached(obs, actor);
        self.critic.forward_cached(obs, critic);
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, s), x)| {
            let z = (x - m) / s.exp();
            -0.5 * z * z - s - HALF_LN_2PI
        })
        .sum()
}

/// Action sampled for a rollout: the raw draw is kept for the update.
#[derive(Debug, Clone)]
pub struct Sampled {
    pub raw: Vec<f64>,
    pub action: ActionVector,
    pub log_prob: f64,
    pub value: f64,
}

fn to_action(v: &[f64]) -> ActionVector {
    ActionVector(std::array::from_fn(|i| v[i].clamp(-1.0, 1.0)))
}

fn check_finite(v: &[f64]) -> Result<(), PpoError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(PpoError::NonFiniteOutput)
    }
}

/// Deterministic mode returns the clipped mean; stochastic mode clips a
/// draw from `N(mean, exp(log_std))`.
pub fn act<R: Rng + ?Sized>(
    policy: &PolicyNetwork,
    obs: &Observation,
    deterministic: bool,
    rng: &mut R,
) -> Result<ActionVector, PpoError> {
    if deterministic {
        let mean = policy.mean(&obs.to_array());
        check_finite(&mean)?;
        Ok(to_action(&mean))
    } else {
        Ok(sample(policy, &obs.to_array(), rng)?.action)
    }
}

pub fn sample<R: Rng + ?Sized>(policy: &PolicyNetwork, obs: &[f64], rng: &mut R) -> Result<Sampled, PpoError> {
    let mean = policy.mean(obs);
    check_finite(&mean)?;
    check_finite(&policy.log_std)?;
    let raw: Vec<f64> = mean
        .iter()
        .zip(&policy.log_std)
        .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let log_prob = gaussian_log_prob(&mean, &policy.log_std, &raw);
    let value = policy.value(obs);
    check_finite(&[value])?;
    Ok(Sampled {
        action: to_action(&raw),
        raw,
        log_prob,
        value,
    })
}
