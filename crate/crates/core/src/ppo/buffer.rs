/// Transitions from `n_envs` environments collected in lock step.
///
/// Record `t * n_envs + e` is environment `e` at step `t`; `done` marks the
/// last transition of an episode.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub observations: Vec<Vec<f64>>,
    pub raw_actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize) -> Self {
        assert!(n_envs > 0, "at least one environment");
        Self {
            n_envs,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn clear(&mut self) {
        let n = self.n_envs;
        *self = Self::new(n);
    }

    pub fn push(&mut self, obs: Vec<f64>, raw_action: Vec<f64>, log_prob: f64, reward: f64, value: f64, done: bool) {
        self.observations.push(obs);
        self.raw_actions.push(raw_action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
    }

    /// Generalised advantage estimation. `last_values[e]` bootstraps
    /// environment `e` after the final step unless that step ended an episode.
    pub fn compute_gae(&mut self, last_values: &[f64], gamma: f64, lambda: f64) {
        let n = self.n_envs;
        assert_eq!(last_values.len(), n, "one bootstrap value per environment");
        assert_eq!(self.len() % n, 0, "incomplete lock-step row");
        let steps = self.len() / n;
        self.advantages = vec![0.0; self.len()];
        for e in 0..n {
            let mut gae = 0.0;
            for t in (0..steps).rev() {
                let k = t * n + e;
                let next_value = if t + 1 < steps { self.values[k + n] } else { last_values[e] };
                let live = if self.dones[k] { 0.0 } else { 1.0 };
                let delta = self.rewards[k] + gamma * next_value * live - self.values[k];
                gae = delta + gamma * lambda * live * gae;
                self.advantages[k] = gae;
            }
        }
        self.returns = self.advantages.iter().zip(&self.values).map(|(a, v)| a + v).collect();
    }
}

/// Shifts and scales `adv` to zero mean and unit (sample) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len();
    if n < 2 {
        return;
    }
    let mean = adv.iter().sum::<f64>() / n as f64;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt() + 1e-8;
    adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
}
