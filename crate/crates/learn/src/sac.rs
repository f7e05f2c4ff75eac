//! Soft actor-critic with twin Q networks, Polyak-averaged targets, a
//! tanh-squashed Gaussian actor and automatic temperature tuning.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::error::LearnError;
use crate::gaussian::{clamp_log_std, entropy, SQUASH_EPS};
use crate::mlp::Mlp;
use crate::policy::{GaussianPolicy, NetworkConfig, HIDDEN_GAIN};
use crate::replay::Transition;
use crate::schedule::LrSchedule;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacConfig {
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub max_steps: u64,
    pub gamma: f64,
    pub tau: f64,
    /// Initial entropy temperature α.
    pub init_temperature: f64,
    /// Defaults to −(action dim).
    pub target_entropy: Option<f64>,
    /// Uniform-random env steps before the first update.
    pub warmup_steps: u64,
    /// Env steps per gradient update.
    pub steps_per_update: u64,
    pub network: NetworkConfig,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            replay_capacity: 512_000,
            learning_rate: 5e-4,
            lr_schedule: LrSchedule::Linear,
            max_steps: 3_000_000,
            gamma: 0.99,
            tau: 0.005,
            init_temperature: 0.1,
            target_entropy: None,
            warmup_steps: 1000,
            steps_per_update: 1,
            network: NetworkConfig::default(),
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(format!("sac: {m}")));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("need 0 < batch_size <= replay_capacity");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.init_temperature > 0.0 && self.init_temperature.is_finite()) {
            return bad("init_temperature must be positive");
        }
        if self.steps_per_update == 0 {
            return bad("steps_per_update must be positive");
        }
        if self.target_entropy.is_some_and(|h| !h.is_finite()) {
            return bad("target_entropy must be finite");
        }
        self.network.validate()
    }

    pub fn target_entropy_for(&self, act_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(act_dim as f64))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacBatch {
    pub obs: Array2<f64>,
    /// Squashed actions in [−1, 1].
    pub action: Array2<f64>,
    pub reward: Vec<f64>,
    pub next_obs: Array2<f64>,
    pub terminated: Vec<bool>,
}

impl SacBatch {
    pub fn from_transitions(ts: &[&Transition]) -> Result<Self, LearnError> {
        let first = ts.first().ok_or_else(|| LearnError::Shape("empty SAC batch".into()))?;
        let (od, ad) = (first.obs.len(), first.action.len());
        let n = ts.len();
        let mut obs = Array2::zeros((n, od));
        let mut next = Array2::zeros((n, od));
        let mut act = Array2::zeros((n, ad));
        for (i, t) in ts.iter().enumerate() {
            if t.obs.len() != od || t.next_obs.len() != od || t.action.len() != ad {
                return Err(LearnError::Shape("ragged transitions".into()));
            }
            obs.row_mut(i).assign(&ndarray::ArrayView1::from(&t.obs[..]));
            next.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_obs[..]));
            act.row_mut(i).assign(&ndarray::ArrayView1::from(&t.action[..]));
        }
        Ok(Self {
            obs,
            action: act,
            reward: ts.iter().map(|t| t.reward).collect(),
            next_obs: next,
            terminated: ts.iter().map(|t| t.terminated).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// Row-wise `[obs | action]`, the Q-network input.
pub fn q_input(obs: ArrayView2<f64>, action: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs, action]).expect("row counts agree")
}

/// Reparameterized squashed samples: u = μ + σ·ε, a = tanh(u), and
/// log π(a|s) per row.
pub fn squashed_sample(
    policy: &GaussianPolicy,
    mean: ArrayView2<f64>,
    eps: ArrayView2<f64>,
) -> (Array2<f64>, Vec<f64>) {
    let (n, d) = eps.dim();
    let mut a = Array2::zeros((n, d));
    let mut logp = vec![0.0; n];
    for i in 0..n {
        for j in 0..d {
            let ls = policy.log_std[j];
            let e = eps[(i, j)];
            let t = (mean[(i, j)] + ls.exp() * e).tanh();
            a[(i, j)] = t;
            logp[i] += -0.5 * e * e - ls - HALF_LOG_2PI - (1.0 - t * t + SQUASH_EPS).ln();
        }
    }
    (a, logp)
}

/// Soft Bellman targets `r + γ(1 − term)(min Q̄(s', a') − α log π(a'|s'))`
/// with a' drawn through the noise `eps_next`.
pub fn sac_targets(
    policy: &GaussianPolicy,
    q1_target: &Mlp,
    q2_target: &Mlp,
    alpha: f64,
    gamma: f64,
    batch: &SacBatch,
    eps_next: ArrayView2<f64>,
) -> Result<Vec<f64>, LearnError> {
    let mean = policy.mean(batch.next_obs.view())?;
    let (a2, logp2) = squashed_sample(policy, mean.view(), eps_next);
    let x = q_input(batch.next_obs.view(), a2.view());
    let q1 = q1_target.forward(x.view())?;
    let q2 = q2_target.forward(x.view())?;
    Ok((0..batch.len())
        .map(|i| {
            if batch.terminated[i] {
                batch.reward[i]
            } else {
                let soft = q1[(i, 0)].min(q2[(i, 0)]) - alpha * logp2[i];
                batch.reward[i] + gamma * soft
            }
        })
        .collect())
}

/// `mean((Q(s, a) − y)²)` and its parameter gradient.
pub fn q_loss_and_grad(q: &Mlp, input: ArrayView2<f64>, targets: &[f64]) -> Result<(f64, Vec<f64>), LearnError> {
    let n = targets.len();
    if input.nrows() != n || n == 0 {
        return Err(LearnError::Shape("Q batch and targets differ in length".into()));
    }
    let tape = q.forward_tape(input)?;
    let out = tape.output();
    let mut g = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        let e = out[(i, 0)] - targets[i];
        loss += e * e;
        g[(i, 0)] = 2.0 * e / n as f64;
    }
    let (grad, _) = q.backward(&tape, g.view());
    Ok((loss / n as f64, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacPolicyGrad {
    pub net: Vec<f64>,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacPolicyLoss {
    pub loss: f64,
    pub log_probs: Vec<f64>,
}

/// `mean(α log π(a|s) − min(Q1, Q2)(s, a))` for reparameterized actions
/// a = tanh(μ(s) + σ·ε), with its gradient in the actor parameters.
pub fn policy_loss_and_grad(
    policy: &GaussianPolicy,
    q1: &Mlp,
    q2: &Mlp,
    obs: ArrayView2<f64>,
    eps: ArrayView2<f64>,
    alpha: f64,
) -> Result<(SacPolicyLoss, SacPolicyGrad), LearnError> {
    let n = obs.nrows();
    let d = policy.act_dim();
    if eps.dim() != (n, d) || n == 0 {
        return Err(LearnError::Shape("noise shape does not match the batch".into()));
    }
    let nf = n as f64;
    let tape = policy.net.forward_tape(obs)?;
    let mean = tape.output();
    let (a, logp) = squashed_sample(policy, mean.view(), eps);
    let x = q_input(obs, a.view());
    let t1 = q1.forward_tape(x.view())?;
    let t2 = q2.forward_tape(x.view())?;
    let mut sel1 = Array2::zeros((n, 1));
    let mut sel2 = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        let (v1, v2) = (t1.output()[(i, 0)], t2.output()[(i, 0)]);
        if v1 <= v2 {
            sel1[(i, 0)] = 1.0;
        } else {
            sel2[(i, 0)] = 1.0;
        }
        loss += alpha * logp[i] - v1.min(v2);
    }
    loss /= nf;
    let (_, dx1) = q1.backward(&t1, sel1.view());
    let (_, dx2) = q2.backward(&t2, sel2.view());
    let od = obs.ncols();
    let dq_da = &dx1.slice(s![.., od..]) + &dx2.slice(s![.., od..]);

    let mut g_u = Array2::zeros((n, d));
    let mut g_ls = vec![-alpha; d];
    for i in 0..n {
        for j in 0..d {
            let t = a[(i, j)];
            let sech2 = 1.0 - t * t;
            let du = (alpha * 2.0 * t * sech2 / (sech2 + SQUASH_EPS) - dq_da[(i, j)] * sech2) / nf;
            g_u[(i, j)] = du;
            g_ls[j] += du * policy.log_std[j].exp() * eps[(i, j)];
        }
    }
    let (g_net, _) = policy.net.backward(&tape, g_u.view());
    Ok((
        SacPolicyLoss { loss, log_probs: logp },
        SacPolicyGrad {
            net: g_net,
            log_std: g_ls,
        },
    ))
}

/// `−mean(log α · (log π + H̄))` with log π held fixed; returns the loss and
/// its derivative in log α.
pub fn temperature_loss_and_grad(log_alpha: f64, log_probs: &[f64], target_entropy: f64) -> (f64, f64) {
    let m = log_probs.iter().map(|lp| lp + target_entropy).sum::<f64>() / log_probs.len() as f64;
    (-log_alpha * m, -m)
}

/// θ̄ ← (1 − τ)·θ̄ + τ·θ.
pub fn polyak(target: &mut [f64], online: &[f64], tau: f64) {
    assert_eq!(target.len(), online.len());
    for (t, o) in target.iter_mut().zip(online) {
        *t = (1.0 - tau) * *t + tau * o;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SacUpdateStats {
    pub q1_loss: f64,
    pub q2_loss: f64,
    pub policy_loss: f64,
    pub temperature_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub policy: GaussianPolicy,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    opt_policy: Adam,
    opt_log_std: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_alpha: Adam,
    updates: u64,
}

impl SacAgent {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, cfg: &SacConfig, rng: &mut R) -> Self {
        let policy = GaussianPolicy::new(obs_dim, act_dim, &cfg.network, rng);
        let sizes = cfg.network.sizes(obs_dim + act_dim, 1);
        let q1 = Mlp::orthogonal(&sizes, HIDDEN_GAIN, 1.0, rng);
        let q2 = Mlp::orthogonal(&sizes, HIDDEN_GAIN, 1.0, rng);
        Self::from_parts(policy, q1.clone(), q2.clone(), q1, q2, cfg.init_temperature.ln())
    }

    pub fn from_parts(policy: GaussianPolicy, q1: Mlp, q2: Mlp, q1_target: Mlp, q2_target: Mlp, log_alpha: f64) -> Self {
        Self {
            opt_policy: Adam::new(policy.net.param_count()),
            opt_log_std: Adam::new(policy.act_dim()),
            opt_q1: Adam::new(q1.param_count()),
            opt_q2: Adam::new(q2.param_count()),
            opt_alpha: Adam::new(1),
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            updates: 0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn update<R: Rng>(
        &mut self,
        batch: &SacBatch,
        cfg: &SacConfig,
        lr: f64,
        rng: &mut R,
    ) -> Result<SacUpdateStats, LearnError> {
        let (n, d) = (batch.len(), self.policy.act_dim());
        let eps_next = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        let eps_now = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        let alpha = self.alpha();

        let y = sac_targets(
            &self.policy,
            &self.q1_target,
            &self.q2_target,
            alpha,
            cfg.gamma,
            batch,
            eps_next.view(),
        )?;
        let x = q_input(batch.obs.view(), batch.action.view());
        let (l1, g1) = q_loss_and_grad(&self.q1, x.view(), &y)?;
        let (l2, g2) = q_loss_and_grad(&self.q2, x.view(), &y)?;
        self.check(l1 + l2, "SAC Q loss")?;
        self.opt_q1.step(&mut self.q1.params, &g1, lr);
        self.opt_q2.step(&mut self.q2.params, &g2, lr);

        let (pl, pg) = policy_loss_and_grad(&self.policy, &self.q1, &self.q2, batch.obs.view(), eps_now.view(), alpha)?;
        self.check(pl.loss, "SAC policy loss")?;
        self.opt_policy.step(&mut self.policy.net.params, &pg.net, lr);
        self.opt_log_std.step(&mut self.policy.log_std, &pg.log_std, lr);
        clamp_log_std(&mut self.policy.log_std);

        let (tl, tg) = temperature_loss_and_grad(self.log_alpha, &pl.log_probs, cfg.target_entropy_for(d));
        let mut la = [self.log_alpha];
        self.opt_alpha.step(&mut la, &[tg], lr);
        self.log_alpha = la[0];
        self.check(self.log_alpha, "SAC log temperature")?;

        polyak(&mut self.q1_target.params, &self.q1.params, cfg.tau);
        polyak(&mut self.q2_target.params, &self.q2.params, cfg.tau);
        self.updates += 1;
        Ok(SacUpdateStats {
            q1_loss: l1,
            q2_loss: l2,
            policy_loss: pl.loss,
            temperature_loss: tl,
            alpha: self.alpha(),
            entropy: entropy(&self.policy.log_std),
        })
    }

    fn check(&self, x: f64, what: &str) -> Result<(), LearnError> {
        if x.is_finite() {
            Ok(())
        } else {
            Err(LearnError::NonFinite {
                what: format!("{what} ({x})"),
                update: self.updates,
            })
        }
    }
}
