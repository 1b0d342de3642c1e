//! Rollout storage and generalized advantage estimation.

use crate::error::{PptError, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBuffer {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Behaviour-policy mean per step, for the KL estimate.
    pub old_means: Vec<Vec<f64>>,
    pub old_log_std: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Value used to bootstrap after the last step when it is not terminal.
    pub bootstrap_value: f64,
}

impl RolloutBuffer {
    pub fn new(old_log_std: Vec<f64>) -> Self {
        Self {
            old_log_std,
            ..Self::default()
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        obs: Vec<f64>,
        action: Vec<f64>,
        log_prob: f64,
        reward: f64,
        value: f64,
        done: bool,
        mean: Vec<f64>,
    ) {
        self.obs.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
        self.values.push(value);
        self.dones.push(done);
        self.old_means.push(mean);
        self.advantages.clear();
        self.returns.clear();
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn has_advantages(&self) -> bool {
        !self.is_empty() && self.advantages.len() == self.len()
    }

    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) -> Result<()> {
        let (adv, ret) = gae(&self.rewards, &self.values, &self.dones, self.bootstrap_value, gamma, lambda)?;
        self.advantages = adv;
        self.returns = ret;
        Ok(())
    }

    pub fn mean_reward(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.rewards.iter().sum::<f64>() / self.len() as f64
        }
    }
}

/// Advantages `Â_t = δ_t + γλ(1 − done_t)Â_{t+1}` and returns `Â_t + V_t`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(PptError::EmptyInput("rollout buffer".into()));
    }
    if values.len() != n || dones.len() != n {
        return Err(PptError::DimensionMismatch { expected: n, got: values.len().min(dones.len()) });
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Zero-mean, unit-variance copy; single samples are only centered.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    if adv.len() < 2 {
        return adv.iter().map(|a| a - mean).collect();
    }
    let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect()
}
