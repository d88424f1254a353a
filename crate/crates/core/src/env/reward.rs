use super::EnvError;

/// Running state of the improvement reward.
///
/// `delta(f) = 100 * (f_initial - f) / (f_initial - f_ideal)`; a step that
/// improves the best-so-far fitness earns `delta(f_current)^2 -
/// delta(f_previous)^2`, any other step earns 0. Summed over an episode the
/// rewards telescope to `delta(best)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTracker {
    pub f_initial: f64,
    pub f_ideal: f64,
    /// Best fitness seen before the current step.
    pub f_previous: f64,
    pub f_current: f64,
    pub delta_previous: f64,
    pub delta_current: f64,
    pub reward: f64,
}

impl RewardTracker {
    pub fn new(f_initial: f64, f_ideal: f64) -> Self {
        Self {
            f_initial,
            f_ideal,
            f_previous: f_initial,
            f_current: f_initial,
            delta_previous: 0.0,
            delta_current: 0.0,
            reward: 0.0,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.f_initial > self.f_ideal)
    }

    /// Normalised improvement of `f`.
    pub fn delta(&self, f: f64) -> Result<f64, EnvError> {
        if self.is_degenerate() {
            return Err(EnvError::DegenerateNormalization {
                f_initial: self.f_initial,
                f_ideal: self.f_ideal,
            });
        }
        Ok(100.0 * (self.f_initial - f) / (self.f_initial - self.f_ideal))
    }

    /// Records `f_current` and returns the step reward.
    pub fn update(&mut self, f_current: f64) -> Result<f64, EnvError> {
        self.f_current = f_current;
        reward(self)
    }
}

/// Computes the reward for `tracker.f_current` and advances `f_previous`
/// to the running best.
pub fn reward(tracker: &mut RewardTracker) -> Result<f64, EnvError> {
    let delta_previous = tracker.delta(tracker.f_previous)?;
    let delta_current = tracker.delta(tracker.f_current)?;
    tracker.delta_previous = delta_previous;
    tracker.delta_current = delta_current;
    tracker.reward = if tracker.f_current < tracker.f_previous {
        delta_current * delta_current - delta_previous * delta_previous
    } else {
        0.0
    };
    tracker.f_previous = tracker.f_previous.min(tracker.f_current);
    Ok(tracker.reward)
}
