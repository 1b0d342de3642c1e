//! Actor-critic parameters, the clipped-surrogate loss with its exact gradient,
//! and the PPO update loop.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::buffer::{normalize_advantages, RolloutBuffer};
use super::network::MlpLayout;
use crate::error::{PptError, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub lr_min: f64,
    pub lr_max: f64,
    pub kl_target: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Number of update iterations.
    pub episodes: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            epochs: 5,
            minibatch_size: 64,
            learning_rate: 3e-4,
            lr_min: 1e-6,
            lr_max: 1e-2,
            kl_target: 0.01,
            entropy_coef: 0.005,
            value_coef: 0.5,
            max_grad_norm: 1.0,
            episodes: 1000,
            hidden: vec![256, 256, 128],
            init_log_std: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PptError::Config(m.into()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if self.epochs == 0 || self.minibatch_size == 0 {
            return bad("epochs and minibatch size must be positive");
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.learning_rate && self.learning_rate <= self.lr_max) {
            return bad("learning rate must lie in [lr_min, lr_max]");
        }
        if !(self.kl_target > 0.0) || self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return bad("kl target must be positive and loss coefficients non-negative");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden sizes must be non-empty and positive");
        }
        Ok(())
    }
}

/// Separate actor and critic MLPs plus a state-independent log-std, in one flat vector
/// laid out as `[actor | critic | log_std]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub actor: MlpLayout,
    pub critic: MlpLayout,
    /// Observation indices fed to the actor.
    pub actor_inputs: Vec<usize>,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub mean: Vec<f64>,
    pub value: f64,
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s.exp();
            -0.5 * z * z - s - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

/// `KL(old ‖ new)` for diagonal Gaussians.
pub fn gaussian_kl(mean_old: &[f64], log_std_old: &[f64], mean_new: &[f64], log_std_new: &[f64]) -> f64 {
    (0..mean_old.len())
        .map(|j| {
            let (so, sn) = (log_std_old[j], log_std_new[j]);
            let var_o = (2.0 * so).exp();
            let var_n = (2.0 * sn).exp();
            sn - so + (var_o + (mean_old[j] - mean_new[j]).powi(2)) / (2.0 * var_n) - 0.5
        })
        .sum()
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        actor_inputs: Option<Vec<usize>>,
        action_dim: usize,
        hidden: &[usize],
        init_log_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let actor_inputs = actor_inputs.unwrap_or_else(|| (0..obs_dim).collect());
        if actor_inputs.is_empty() || actor_inputs.iter().any(|&i| i >= obs_dim) {
            return Err(PptError::InvalidInput("actor input indices out of range".into()));
        }
        let mut a_sizes = vec![actor_inputs.len()];
        a_sizes.extend_from_slice(hidden);
        a_sizes.push(action_dim);
        let mut c_sizes = vec![obs_dim];
        c_sizes.extend_from_slice(hidden);
        c_sizes.push(1);
        let actor = MlpLayout::new(a_sizes)?;
        let critic = MlpLayout::new(c_sizes)?;
        let mut theta = actor.init(rng, 0.01);
        theta.extend(critic.init(rng, 1.0));
        theta.extend(std::iter::repeat_n(init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX), action_dim));
        Ok(Self {
            actor,
            critic,
            actor_inputs,
            theta,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.critic.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (a, rest) = theta.split_at(self.actor.len());
        let (c, s) = rest.split_at(self.critic.len());
        (a, c, s)
    }

    pub fn log_std(&self) -> &[f64] {
        self.split(&self.theta).2
    }

    pub fn log_std_mut(&mut self) -> &mut [f64] {
        let off = self.actor.len() + self.critic.len();
        &mut self.theta[off..]
    }

    /// Bias of the actor output layer; sets the initial action mean.
    pub fn actor_output_bias_mut(&mut self) -> &mut [f64] {
        let n = self.action_dim();
        let end = self.actor.len();
        &mut self.theta[end - n..end]
    }

    fn clamp_log_std(&mut self) {
        for s in self.log_std_mut() {
            *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    fn actor_matrix(&self, obs: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(self.actor_inputs.len(), obs.len(), |i, j| obs[j][self.actor_inputs[i]])
    }

    fn critic_matrix(&self, obs: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(self.obs_dim(), obs.len(), |i, j| obs[j][i])
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim() {
            return Err(PptError::DimensionMismatch { expected: self.obs_dim(), got: obs.len() });
        }
        Ok(())
    }

    /// Action mean, log-std and value for one observation.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        self.check_obs(obs)?;
        let (a, c, s) = self.split(&self.theta);
        let x: Vec<f64> = self.actor_inputs.iter().map(|&i| obs[i]).collect();
        let mean = self.actor.forward_one(a, &x)?;
        let value = self.critic.forward_one(c, obs)?[0];
        Ok((mean.as_slice().to_vec(), s.to_vec(), value))
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, deterministic: bool) -> Result<ActionSample> {
        let (mean, log_std, value) = self.forward(obs)?;
        let action: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            mean.iter()
                .zip(&log_std)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + s.exp() * z
                })
                .collect()
        };
        Ok(ActionSample {
            log_prob: gaussian_log_prob(&mean, &log_std, &action),
            action,
            mean,
            value,
        })
    }
}

/// Samples used for one loss evaluation.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Total loss `−L_clip + c_v·L_V − c_e·H` and its gradient with respect to `theta`.
pub fn ppo_loss(
    ac: &ActorCritic,
    theta: &[f64],
    batch: &Minibatch,
    cfg: &PpoConfig,
    want_grad: bool,
) -> Result<(LossTerms, Vec<f64>)> {
    let n = batch.len();
    if n == 0 {
        return Err(PptError::EmptyInput("minibatch".into()));
    }
    let (ta, tc, log_std) = ac.split(theta);
    let ca = ac.actor.forward(ta, &ac.actor_matrix(&batch.obs))?;
    let cc = ac.critic.forward(tc, &ac.critic_matrix(&batch.obs))?;
    let means = ca.output();
    let values = cc.output();
    let dim = ac.action_dim();
    let inv_n = 1.0 / n as f64;

    let mut d_mean = DMatrix::zeros(dim, n);
    let mut d_value = DMatrix::zeros(1, n);
    let mut d_log_std = vec![0.0; dim];
    let mut policy = 0.0;
    let mut value_loss = 0.0;
    let mut clipped = 0usize;

    for k in 0..n {
        let mean: Vec<f64> = means.column(k).iter().copied().collect();
        let a = &batch.actions[k];
        let logp = gaussian_log_prob(&mean, log_std, a);
        let ratio = (logp - batch.old_log_probs[k]).exp();
        let adv = batch.advantages[k];
        let clip_r = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
        let unclipped = ratio * adv;
        let surr = unclipped.min(clip_r * adv);
        if surr > unclipped + 1e-12 * unclipped.abs().max(1.0) {
            return Err(PptError::InvariantViolation("clipped surrogate exceeds r·A".into()));
        }
        let active = if adv >= 0.0 { ratio < 1.0 + cfg.clip } else { ratio > 1.0 - cfg.clip };
        if !active {
            clipped += 1;
        }
        policy -= surr * inv_n;
        let v_err = values[(0, k)] - batch.returns[k];
        value_loss += v_err * v_err * inv_n;
        if want_grad {
            d_value[(0, k)] = cfg.value_coef * 2.0 * v_err * inv_n;
            if active {
                // ∂(−surr/n)/∂logp
                let g = -adv * ratio * inv_n;
                for j in 0..dim {
                    let var = (2.0 * log_std[j]).exp();
                    let diff = a[j] - mean[j];
                    d_mean[(j, k)] = g * diff / var;
                    d_log_std[j] += g * (diff * diff / var - 1.0);
                }
            }
        }
    }
    let entropy = gaussian_entropy(log_std);
    let total = policy + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
    let terms = LossTerms {
        total,
        policy,
        value: value_loss,
        entropy,
        clip_fraction: clipped as f64 * inv_n,
    };
    if !want_grad {
        return Ok((terms, Vec::new()));
    }
    let mut grad = vec![0.0; theta.len()];
    let (ga, rest) = grad.split_at_mut(ac.actor.len());
    let (gc, gs) = rest.split_at_mut(ac.critic.len());
    ac.actor.backward(ta, &ca, &d_mean, ga);
    ac.critic.backward(tc, &cc, &d_value, gc);
    for (g, d) in gs.iter_mut().zip(&d_log_std) {
        *g = d - cfg.entropy_coef;
    }
    Ok((terms, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            theta[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub update: usize,
    pub mean_reward: f64,
    pub kl: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub learning_rate: f64,
    pub grad_norm: f64,
    pub error: String,
}

pub fn write_stats_csv<W: Write>(w: W, stats: &[UpdateStats]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for s in stats {
        wr.serialize(s)?;
    }
    wr.flush()?;
    Ok(())
}

/// Optimizer state carried across updates.
#[derive(Debug, Clone)]
pub struct Ppo {
    pub config: PpoConfig,
    pub adam: Adam,
    pub learning_rate: f64,
    pub updates: usize,
    rng: ChaCha8Rng,
}

impl Ppo {
    pub fn new(config: PpoConfig, num_params: usize, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            learning_rate: config.learning_rate,
            adam: Adam::new(num_params),
            config,
            updates: 0,
            rng,
        })
    }

    fn mean_kl(ac: &ActorCritic, buf: &RolloutBuffer) -> Result<f64> {
        let mut kl = 0.0;
        for (o, m_old) in buf.obs.iter().zip(&buf.old_means) {
            let (m_new, s_new, _) = ac.forward(o)?;
            kl += gaussian_kl(m_old, &buf.old_log_std, &m_new, &s_new);
        }
        Ok(kl / buf.len() as f64)
    }

    pub fn update(&mut self, ac: &mut ActorCritic, buf: &mut RolloutBuffer) -> Result<UpdateStats> {
        if buf.is_empty() {
            return Err(PptError::EmptyInput("rollout buffer".into()));
        }
        if !buf.has_advantages() {
            buf.compute_gae(self.config.gamma, self.config.lambda)?;
        }
        let cfg = self.config.clone();
        let adv = normalize_advantages(&buf.advantages);
        let snapshot = ac.theta.clone();
        let mut stats = UpdateStats {
            update: self.updates,
            mean_reward: buf.mean_reward(),
            learning_rate: self.learning_rate,
            ..Default::default()
        };
        let mut idx: Vec<usize> = (0..buf.len()).collect();
        let mut last = LossTerms::default();
        'epochs: for _ in 0..cfg.epochs {
            idx.shuffle(&mut self.rng);
            for chunk in idx.chunks(cfg.minibatch_size) {
                let batch = Minibatch {
                    obs: chunk.iter().map(|&i| buf.obs[i].clone()).collect(),
                    actions: chunk.iter().map(|&i| buf.actions[i].clone()).collect(),
                    old_log_probs: chunk.iter().map(|&i| buf.log_probs[i]).collect(),
                    advantages: chunk.iter().map(|&i| adv[i]).collect(),
                    returns: chunk.iter().map(|&i| buf.returns[i]).collect(),
                };
                let (terms, mut grad) = ppo_loss(ac, &ac.theta, &batch, &cfg, true)?;
                if !terms.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    ac.theta = snapshot;
                    self.learning_rate = (self.learning_rate * 0.5).max(cfg.lr_min);
                    stats.error = format!("non-finite loss {}", terms.total);
                    break 'epochs;
                }
                stats.grad_norm = clip_grad_norm(&mut grad, cfg.max_grad_norm);
                self.adam.step(&mut ac.theta, &grad, self.learning_rate);
                ac.clamp_log_std();
                last = terms;
            }
        }
        stats.policy_loss = last.policy;
        stats.value_loss = last.value;
        stats.entropy = last.entropy;
        stats.clip_fraction = last.clip_fraction;
        if stats.error.is_empty() {
            stats.kl = Self::mean_kl(ac, buf)?;
            if stats.kl > 2.0 * cfg.kl_target {
                self.learning_rate = (self.learning_rate * 0.5).max(cfg.lr_min);
            } else if stats.kl < 0.5 * cfg.kl_target {
                self.learning_rate = (self.learning_rate * 2.0).min(cfg.lr_max);
            }
        }
        self.updates += 1;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn small(seed: u64) -> ActorCritic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ActorCritic::new(3, Some(vec![0, 2]), 2, &[4], -0.3, &mut rng).unwrap()
    }

    #[test]
    fn log_prob_matches_density() {
        let m: [f64; 2] = [0.3, -1.0];
        let s = [(0.5f64).ln(), (2.0f64).ln()];
        let a: [f64; 2] = [0.1, 0.5];
        let mut dens: f64 = 1.0;
        for j in 0..2 {
            let sd = s[j].exp();
            dens *= (-(a[j] - m[j]).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * PI).sqrt());
        }
        assert!((gaussian_log_prob(&m, &s, &a) - dens.ln()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_act_returns_mean() {
        let ac = small(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = ac.act(&[0.1, 0.2, 0.3], &mut rng, true).unwrap();
        assert_eq!(s.action, s.mean);
        assert!(ac.act(&[0.1], &mut rng, false).is_err());
    }

    #[test]
    fn actor_ignores_masked_inputs() {
        let ac = small(3);
        let (m1, _, v1) = ac.forward(&[0.1, 0.2, 0.3]).unwrap();
        let (m2, _, v2) = ac.forward(&[0.1, 9.0, 0.3]).unwrap();
        assert_eq!(m1, m2);
        assert_ne!(v1, v2);
    }

    #[test]
    fn kl_of_identical_is_zero() {
        assert_eq!(gaussian_kl(&[1.0, 2.0], &[0.1, -0.2], &[1.0, 2.0], &[0.1, -0.2]), 0.0);
        assert!(gaussian_kl(&[0.0], &[0.0], &[1.0], &[0.0]) > 0.0);
    }

    #[test]
    fn clip_arithmetic() {
        // ratio 1.5, A > 0: the clipped term uses 1.2.
        let (r, a, eps): (f64, f64, f64) = (1.5, 2.0, 0.2);
        assert_eq!((r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a), 1.2 * a);
    }

    #[test]
    fn first_epoch_ratio_is_one() {
        let ac = small(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1, 0.3, -0.2]).collect();
        let samples: Vec<_> = obs.iter().map(|o| ac.act(o, &mut rng, false).unwrap()).collect();
        let adv = vec![0.5, -1.0, 2.0, 0.1, -0.3, 0.7];
        let batch = Minibatch {
            obs: obs.clone(),
            actions: samples.iter().map(|s| s.action.clone()).collect(),
            old_log_probs: samples.iter().map(|s| s.log_prob).collect(),
            advantages: adv.clone(),
            returns: vec![0.0; 6],
        };
        let (t, _) = ppo_loss(&ac, &ac.theta, &batch, &PpoConfig::default(), false).unwrap();
        let mean_adv = adv.iter().sum::<f64>() / 6.0;
        assert!((t.policy + mean_adv).abs() < 1e-12);
        assert_eq!(t.clip_fraction, 0.0);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut a = Adam::new(2);
        let mut th = [1.0, -1.0];
        a.step(&mut th, &[2.0, -3.0], 0.1);
        assert!((th[0] - 0.9).abs() < 1e-6 && (th[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn grad_clip_caps_norm() {
        let mut g = [3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { clip: 1.0, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
    }

    fn random_batch(ac: &ActorCritic, rng: &mut ChaCha8Rng, n: usize) -> Minibatch {
        let obs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..ac.obs_dim()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let samples: Vec<_> = obs.iter().map(|o| ac.act(o, rng, false).unwrap()).collect();
        Minibatch {
            actions: samples.iter().map(|s| s.action.clone()).collect(),
            // Shift the behaviour log-probs so some ratios fall outside the clip range.
            old_log_probs: samples.iter().map(|s| s.log_prob + rng.random_range(-0.4..0.4)).collect(),
            advantages: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            returns: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            obs,
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let cfg = PpoConfig::default();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut ac = ActorCritic::new(3, Some(vec![0, 1]), 2, &[5, 4], -0.2, &mut rng).unwrap();
            for v in ac.theta.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
            assert!(ac.num_params() <= 200);
            let batch = random_batch(&ac, &mut rng, 8);
            let (_, g) = ppo_loss(&ac, &ac.theta, &batch, &cfg, true).unwrap();
            let h = 1e-5;
            let mut fd = vec![0.0; g.len()];
            for k in 0..g.len() {
                let mut tp = ac.theta.clone();
                tp[k] += h;
                let mut tm = ac.theta.clone();
                tm[k] -= h;
                let lp = ppo_loss(&ac, &tp, &batch, &cfg, false).unwrap().0.total;
                let lm = ppo_loss(&ac, &tm, &batch, &cfg, false).unwrap().0.total;
                fd[k] = (lp - lm) / (2.0 * h);
            }
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            assert!(diff / scale < 1e-4, "seed {seed}: relative error {}", diff / scale);
        }
    }

    #[test]
    fn quadratic_bandit_shrinks_mean() {
        let mut improved = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ac = ActorCritic::new(1, None, 2, &[16, 16], -0.5, &mut rng).unwrap();
            ac.actor_output_bias_mut().copy_from_slice(&[1.0, -0.8]);
            let cfg = PpoConfig { learning_rate: 3e-3, hidden: vec![16, 16], ..Default::default() };
            let mut ppo = Ppo::new(cfg, ac.num_params(), ChaCha8Rng::seed_from_u64(seed + 50)).unwrap();
            let norm = |ac: &ActorCritic| {
                let (m, _, _) = ac.forward(&[1.0]).unwrap();
                m.iter().map(|v| v * v).sum::<f64>().sqrt()
            };
            let before = norm(&ac);
            let mut buf = RolloutBuffer::new(ac.log_std().to_vec());
            for _ in 0..64 {
                let s = ac.act(&[1.0], &mut rng, false).unwrap();
                let r = -s.action.iter().map(|a| a * a).sum::<f64>();
                buf.push(vec![1.0], s.action, s.log_prob, r, s.value, true, s.mean);
            }
            ppo.update(&mut ac, &mut buf).unwrap();
            if norm(&ac) < before {
                improved += 1;
            }
        }
        assert_eq!(improved, 10);
    }
}
