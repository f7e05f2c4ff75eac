//! Proximal policy optimization: clipped surrogate, GAE advantages and a
//! tanh-squashed Gaussian actor whose log-ratio uses the pre-squash sample.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{clip_global_norm, Adam};
use crate::error::LearnError;
use crate::gae::gae;
use crate::gaussian::{clamp_log_std, entropy, log_prob};
use crate::mlp::Mlp;
use crate::policy::{GaussianPolicy, NetworkConfig, HIDDEN_GAIN};
use crate::schedule::LrSchedule;

/// Advantage normalization guard.
pub const ADV_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub batch_size: usize,
    pub buffer_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub max_steps: u64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub entropy_beta: f64,
    pub num_epoch: usize,
    pub time_horizon: usize,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    /// Recurrent-policy knobs; accepted for config compatibility, unused.
    pub memory_size: Option<usize>,
    pub sequence_length: Option<usize>,
    pub network: NetworkConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            buffer_size: 4096,
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Linear,
            max_steps: 3_000_000,
            gamma: 0.99,
            lambda: 0.95,
            clip_epsilon: 0.2,
            entropy_beta: 0.005,
            num_epoch: 5,
            time_horizon: 1024,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            memory_size: None,
            sequence_length: None,
            network: NetworkConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(format!("ppo: {m}")));
        if self.batch_size == 0 || self.batch_size > self.buffer_size {
            return bad("need 0 < batch_size <= buffer_size");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.num_epoch == 0 || self.time_horizon == 0 {
            return bad("num_epoch and time_horizon must be positive");
        }
        if !(self.entropy_beta >= 0.0 && self.value_coef >= 0.0 && self.max_grad_norm > 0.0) {
            return bad("entropy_beta, value_coef must be >= 0 and max_grad_norm > 0");
        }
        self.network.validate()
    }

    pub fn warn_ignored(&self) {
        if self.memory_size.is_some() || self.sequence_length.is_some() {
            log::warn!("memory_size / sequence_length are recurrent-policy settings and are ignored");
        }
    }
}

/// A training batch: normalized observations, pre-squash actions and the
/// quantities fixed at collection time.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoBatch {
    pub obs: Array2<f64>,
    pub u: Array2<f64>,
    pub old_log_prob: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.old_log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_prob.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> PpoBatch {
        PpoBatch {
            obs: self.obs.select(Axis(0), idx),
            u: self.u.select(Axis(0), idx),
            old_log_prob: idx.iter().map(|&i| self.old_log_prob[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }

    /// Shift and scale advantages to zero mean and unit standard deviation.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        self.advantages.iter_mut().for_each(|a| *a = (*a - mean) / (sd + ADV_EPS));
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoLoss {
    pub total: f64,
    pub policy: f64,
    /// Mean squared value error, before the coefficient.
    pub value: f64,
    pub entropy: f64,
    /// Fraction of samples whose clipped branch was selected.
    pub clip_fraction: f64,
    pub max_ratio_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoGrad {
    pub policy: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: Vec<f64>,
}

/// Full PPO objective and its exact gradient:
/// `−mean(min(r·A, clip(r)·A)) + c_v·mean((V − R)²) − β·H`.
pub fn ppo_loss_and_grad(
    policy: &GaussianPolicy,
    value: &Mlp,
    batch: &PpoBatch,
    cfg: &PpoConfig,
) -> Result<(PpoLoss, PpoGrad), LearnError> {
    let n = batch.len();
    if n == 0 || batch.u.ncols() != policy.act_dim() || batch.obs.nrows() != n {
        return Err(LearnError::Shape("malformed PPO batch".into()));
    }
    let nf = n as f64;
    let act_dim = policy.act_dim();
    let tape = policy.net.forward_tape(batch.obs.view())?;
    let mean = tape.output();
    let sigma: Vec<f64> = policy.log_std.iter().map(|s| s.exp()).collect();

    let mut g_mean = Array2::<f64>::zeros((n, act_dim));
    let mut g_log_std = vec![0.0; act_dim];
    let (mut pol, mut clipped, mut max_dev) = (0.0, 0usize, 0.0f64);
    let (lo, hi) = (1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    for i in 0..n {
        let m = mean.row(i);
        let u = batch.u.row(i);
        let lp = log_prob(m.as_slice().unwrap(), &policy.log_std, u.as_slice().unwrap());
        let ratio = (lp - batch.old_log_prob[i]).exp();
        max_dev = max_dev.max((ratio - 1.0).abs());
        let a = batch.advantages[i];
        let s1 = ratio * a;
        let s2 = ratio.clamp(lo, hi) * a;
        let g_lp = if s1 <= s2 {
            pol -= s1;
            -a * ratio / nf
        } else {
            pol -= s2;
            clipped += 1;
            0.0
        };
        if g_lp != 0.0 {
            for j in 0..act_dim {
                let z = (u[j] - m[j]) / sigma[j];
                g_mean[(i, j)] = g_lp * z / sigma[j];
                g_log_std[j] += g_lp * (z * z - 1.0);
            }
        }
    }
    pol /= nf;
    let ent = entropy(&policy.log_std);
    g_log_std.iter_mut().for_each(|g| *g -= cfg.entropy_beta);
    let (g_policy, _) = policy.net.backward(&tape, g_mean.view());

    let vtape = value.forward_tape(batch.obs.view())?;
    let v = vtape.output();
    let mut g_v = Array2::<f64>::zeros((n, 1));
    let mut vloss = 0.0;
    for i in 0..n {
        let e = v[(i, 0)] - batch.returns[i];
        vloss += e * e;
        g_v[(i, 0)] = cfg.value_coef * 2.0 * e / nf;
    }
    vloss /= nf;
    let (g_value, _) = value.backward(&vtape, g_v.view());

    let loss = PpoLoss {
        total: pol + cfg.value_coef * vloss - cfg.entropy_beta * ent,
        policy: pol,
        value: vloss,
        entropy: ent,
        clip_fraction: clipped as f64 / nf,
        max_ratio_deviation: max_dev,
    };
    Ok((
        loss,
        PpoGrad {
            policy: g_policy,
            log_std: g_log_std,
            value: g_value,
        },
    ))
}

/// Transitions collected on-policy, cut into segments that each get their
/// own GAE pass.
#[derive(Debug, Clone)]
pub struct Rollout {
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    u: Vec<f64>,
    log_prob: Vec<f64>,
    advantages: Vec<f64>,
    returns: Vec<f64>,
    seg_rewards: Vec<f64>,
    seg_values: Vec<f64>,
}

impl Rollout {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            obs: Vec::new(),
            u: Vec::new(),
            log_prob: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
            seg_rewards: Vec::new(),
            seg_values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_prob.is_empty()
    }

    pub fn segment_len(&self) -> usize {
        self.seg_rewards.len()
    }

    pub fn push(&mut self, obs: &[f64], u: &[f64], log_prob: f64, value: f64, reward: f64) {
        debug_assert_eq!(obs.len(), self.obs_dim);
        debug_assert_eq!(u.len(), self.act_dim);
        self.obs.extend_from_slice(obs);
        self.u.extend_from_slice(u);
        self.log_prob.push(log_prob);
        self.seg_rewards.push(reward);
        self.seg_values.push(value);
    }

    /// Close the open segment. `bootstrap` is V(s_next) for a cut or
    /// truncated segment and 0 after termination.
    pub fn finish_segment(&mut self, bootstrap: f64, gamma: f64, lambda: f64) {
        if self.seg_rewards.is_empty() {
            return;
        }
        let (adv, ret) = gae(&self.seg_rewards, &self.seg_values, bootstrap, gamma, lambda);
        self.advantages.extend(adv);
        self.returns.extend(ret);
        self.seg_rewards.clear();
        self.seg_values.clear();
    }

    /// Drain all closed segments into a batch.
    pub fn take_batch(&mut self) -> PpoBatch {
        assert!(self.seg_rewards.is_empty(), "open segment must be finished first");
        let n = self.log_prob.len();
        PpoBatch {
            obs: Array2::from_shape_vec((n, self.obs_dim), std::mem::take(&mut self.obs)).unwrap(),
            u: Array2::from_shape_vec((n, self.act_dim), std::mem::take(&mut self.u)).unwrap(),
            old_log_prob: std::mem::take(&mut self.log_prob),
            advantages: std::mem::take(&mut self.advantages),
            returns: std::mem::take(&mut self.returns),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoUpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// Largest |ratio − 1| on the first minibatch of the first epoch.
    pub first_minibatch_ratio_deviation: f64,
    pub minibatches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoAgent {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    opt_policy: Adam,
    opt_log_std: Adam,
    opt_value: Adam,
    updates: u64,
}

impl PpoAgent {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, net: &NetworkConfig, rng: &mut R) -> Self {
        let policy = GaussianPolicy::new(obs_dim, act_dim, net, rng);
        let value = Mlp::orthogonal(&net.sizes(obs_dim, 1), HIDDEN_GAIN, 1.0, rng);
        Self::from_parts(policy, value)
    }

    pub fn from_parts(policy: GaussianPolicy, value: Mlp) -> Self {
        Self {
            opt_policy: Adam::new(policy.net.param_count()),
            opt_log_std: Adam::new(policy.act_dim()),
            opt_value: Adam::new(value.param_count()),
            policy,
            value,
            updates: 0,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn value_of(&self, obs: &[f64]) -> Result<f64, LearnError> {
        Ok(self.value.forward_one(obs)?[0])
    }

    /// `num_epoch` passes of shuffled minibatches over the batch, one
    /// optimizer step per minibatch.
    pub fn update<R: Rng>(
        &mut self,
        mut batch: PpoBatch,
        cfg: &PpoConfig,
        lr: f64,
        rng: &mut R,
    ) -> Result<PpoUpdateStats, LearnError> {
        batch.normalize_advantages();
        let mut idx: Vec<usize> = (0..batch.len()).collect();
        let mut stats = PpoUpdateStats::default();
        for epoch in 0..cfg.num_epoch {
            idx.shuffle(rng);
            for (k, chunk) in idx.chunks(cfg.batch_size).enumerate() {
                let mb = batch.select(chunk);
                let (loss, mut g) = ppo_loss_and_grad(&self.policy, &self.value, &mb, cfg)?;
                if !loss.total.is_finite() {
                    return Err(LearnError::NonFinite {
                        what: format!(
                            "PPO loss (policy {}, value {}, entropy {})",
                            loss.policy, loss.value, loss.entropy
                        ),
                        update: self.updates,
                    });
                }
                if epoch == 0 && k == 0 {
                    stats.first_minibatch_ratio_deviation = loss.max_ratio_deviation;
                }
                clip_global_norm(&mut [&mut g.policy, &mut g.log_std, &mut g.value], cfg.max_grad_norm);
                self.opt_policy.step(&mut self.policy.net.params, &g.policy, lr);
                self.opt_log_std.step(&mut self.policy.log_std, &g.log_std, lr);
                clamp_log_std(&mut self.policy.log_std);
                self.opt_value.step(&mut self.value.params, &g.value, lr);
                stats.policy_loss += loss.policy;
                stats.value_loss += loss.value;
                stats.entropy += loss.entropy;
                stats.clip_fraction += loss.clip_fraction;
                stats.minibatches += 1;
            }
        }
        let m = stats.minibatches.max(1) as f64;
        stats.policy_loss /= m;
        stats.value_loss /= m;
        stats.entropy /= m;
        stats.clip_fraction /= m;
        self.updates += 1;
        if !self.policy.net.is_finite() || !self.value.is_finite() {
            return Err(LearnError::NonFinite {
                what: "PPO parameters".into(),
                update: self.updates,
            });
        }
        Ok(stats)
    }
}

/// Value estimates for a batch of observations.
pub fn values(value: &Mlp, obs: ArrayView2<f64>) -> Result<Vec<f64>, LearnError> {
    Ok(value.forward(obs)?.column(0).to_vec())
}
