use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{normalize_advantages, RolloutBuffer};
use super::mlp::MlpCache;
use super::policy::{PolicyGrad, PolicyNetwork};
use super::PpoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyperparams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// Transitions per environment between updates.
    pub n_steps: usize,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_range: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub n_envs: usize,
    /// Multiplies rewards before they enter the buffer. The default maps a
    /// squared improvement of 100 to 1, which keeps the value loss from
    /// swamping the shared gradient-norm cap.
    pub reward_scale: f64,
}

impl Default for PpoHyperparams {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 3e-4,
            n_steps: 2048,
            batch_size: 64,
            n_epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_range: 0.2,
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            n_envs: 1,
            reward_scale: 1e-4,
        }
    }
}

impl PpoHyperparams {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |what: &str| Err(PpoError::InvalidHyperparams(what.to_string()));
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be non-empty and positive");
        }
        if self.n_steps == 0 || self.batch_size == 0 || self.n_envs == 0 {
            return bad("n_steps, batch_size and n_envs must be positive");
        }
        if !(self.learning_rate >= 0.0) || !(self.max_grad_norm > 0.0) || !(self.clip_range > 0.0) {
            return bad("learning_rate must be >= 0, max_grad_norm and clip_range > 0");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !self.reward_scale.is_finite() || !self.ent_coef.is_finite() || !self.vf_coef.is_finite() {
            return bad("coefficients must be finite");
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, policy: &mut PolicyNetwork, grad: &PolicyGrad, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let grads = grad.actor.iter().chain(&grad.log_std).chain(&grad.critic);
        let params = policy.param_slices_mut().into_iter().flat_map(|s| s.iter_mut());
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Samples for one gradient step; advantages are used as given.
#[derive(Debug, Clone, Default)]
pub struct Minibatch {
    pub observations: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn from_indices(buffer: &RolloutBuffer, idx: &[usize]) -> Self {
        Self {
            observations: idx.iter().map(|&i| buffer.observations[i].clone()).collect(),
            raw_actions: idx.iter().map(|&i| buffer.raw_actions[i].clone()).collect(),
            old_log_probs: idx.iter().map(|&i| buffer.log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| buffer.advantages[i]).collect(),
            returns: idx.iter().map(|&i| buffer.returns[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Loss terms of one minibatch, or their means over an update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Clipped-surrogate loss `policy + vf_coef * value - ent_coef * entropy`
/// and its gradient with respect to every policy parameter.
pub fn loss_and_gradient(policy: &PolicyNetwork, batch: &Minibatch, hp: &PpoHyperparams) -> (LossReport, PolicyGrad) {
    let n = batch.len() as f64;
    let mut grad = PolicyGrad::zeros_like(policy);
    let mut report = LossReport::default();
    let mut actor_cache = MlpCache::default();
    let mut critic_cache = MlpCache::default();
    let inv_var: Vec<f64> = policy.log_std.iter().map(|s| (-2.0 * s).exp()).collect();
    let mut d_mean = vec![0.0; policy.act_dim()];
    for k in 0..batch.len() {
        let obs = &batch.observations[k];
        let a = &batch.raw_actions[k];
        policy.forward_cached(obs, &mut actor_cache, &mut critic_cache);
        let mean = actor_cache.output();
        let logp = super::policy::gaussian_log_prob(mean, &policy.log_std, a);
        let log_ratio = logp - batch.old_log_probs[k];
        let ratio = log_ratio.exp();
        let adv = batch.advantages[k];
        let clipped = ratio.clamp(1.0 - hp.clip_range, 1.0 + hp.clip_range);
        let (s1, s2) = (ratio * adv, clipped * adv);
        report.policy_loss -= s1.min(s2) / n;
        if (ratio - 1.0).abs() > hp.clip_range {
            report.clip_fraction += 1.0 / n;
        }
        report.approx_kl += ((ratio - 1.0) - log_ratio) / n;
        // d(policy loss)/d(log p): the unclipped branch carries the gradient.
        let g_logp = if s1 <= s2 { -adv * ratio / n } else { 0.0 };
        if g_logp != 0.0 {
            for j in 0..d_mean.len() {
                let diff = a[j] - mean[j];
                d_mean[j] = g_logp * diff * inv_var[j];
                grad.log_std[j] += g_logp * (diff * diff * inv_var[j] - 1.0);
            }
            policy.actor.backward(&actor_cache, &d_mean, &mut grad.actor);
        }
        let v = critic_cache.output()[0];
        let err = v - batch.returns[k];
        report.value_loss += err * err / n;
        policy
            .critic
            .backward(&critic_cache, &[hp.vf_coef * 2.0 * err / n], &mut grad.critic);
    }
    report.entropy = policy.entropy();
    grad.log_std.iter_mut().for_each(|g| *g -= hp.ent_coef);
    report.total_loss = report.policy_loss + hp.vf_coef * report.value_loss - hp.ent_coef * report.entropy;
    (report, grad)
}

/// Runs `n_epochs` passes of shuffled minibatch updates over `buffer`,
/// which must already carry advantages and returns.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyNetwork,
    optimizer: &mut Adam,
    buffer: &RolloutBuffer,
    hp: &PpoHyperparams,
    rng: &mut R,
) -> Result<LossReport, PpoError> {
    if buffer.is_empty() || buffer.advantages.len() != buffer.len() {
        return Err(PpoError::EmptyBuffer);
    }
    let mut idx: Vec<usize> = (0..buffer.len()).collect();
    let mut mean = LossReport::default();
    let mut batches = 0usize;
    for epoch in 0..hp.n_epochs {
        idx.shuffle(rng);
        for (b, chunk) in idx.chunks(hp.batch_size).enumerate() {
            let mut batch = Minibatch::from_indices(buffer, chunk);
            normalize_advantages(&mut batch.advantages);
            let (report, mut grad) = loss_and_gradient(policy, &batch, hp);
            let norm = grad.norm();
            if !report.total_loss.is_finite() || !norm.is_finite() {
                return Err(PpoError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    policy_loss: report.policy_loss,
                    value_loss: report.value_loss,
                    grad_norm: norm,
                });
            }
            if norm > hp.max_grad_norm {
                grad.scale(hp.max_grad_norm / (norm + 1e-6));
            }
            optimizer.step(policy, &grad, hp.learning_rate);
            policy.clamp_log_std();
            mean.policy_loss += report.policy_loss;
            mean.value_loss += report.value_loss;
            mean.entropy += report.entropy;
            mean.total_loss += report.total_loss;
            mean.clip_fraction += report.clip_fraction;
            mean.approx_kl += report.approx_kl;
            batches += 1;
        }
    }
    if batches > 0 {
        let k = batches as f64;
        mean.policy_loss /= k;
        mean.value_loss /= k;
        mean.entropy /= k;
        mean.total_loss /= k;
        mean.clip_fraction /= k;
        mean.approx_kl /= k;
    }
    Ok(mean)
}
