//! Finite-difference checks of the analytic PPO and SAC loss gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::LearnError;
use crate::gaussian::log_prob;
use crate::mlp::Mlp;
use crate::policy::{GaussianPolicy, NetworkConfig};
use crate::ppo::{ppo_loss_and_grad, PpoBatch, PpoConfig};
use crate::sac::{policy_loss_and_grad, q_input, q_loss_and_grad, temperature_loss_and_grad};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the component-wise relative error.
pub const REL_FLOOR: f64 = 1e-6;

/// Worst component-wise relative error of one gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub params: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

pub fn central_difference<F>(params: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let x = p[i];
            p[i] = x + h;
            let up = f(&p);
            p[i] = x - h;
            let down = f(&p);
            p[i] = x;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn compare(name: &str, analytic: &[f64], numeric: &[f64]) -> GradCheck {
    assert_eq!(analytic.len(), numeric.len());
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    GradCheck {
        name: name.to_string(),
        params: analytic.len(),
        max_rel_error,
        worst_index,
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng.sample::<f64, _>(StandardNormal))
}

/// A PPO batch whose probability ratios sit strictly inside or strictly
/// outside the clip interval, so the objective is smooth at the fixture.
pub fn ppo_fixture(seed: u64, n: usize, obs_dim: usize, act_dim: usize) -> (GaussianPolicy, Mlp, PpoBatch, PpoConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = NetworkConfig::default();
    let mut policy = GaussianPolicy::new(obs_dim, act_dim, &net, &mut rng);
    // Lift the head out of its near-zero init so every block carries signal.
    policy.net.params.iter_mut().for_each(|p| *p += 0.05 * rng.sample::<f64, _>(StandardNormal));
    policy.log_std = (0..act_dim).map(|_| rng.random_range(-1.0..0.0)).collect();
    let value = Mlp::orthogonal(&net.sizes(obs_dim, 1), crate::policy::HIDDEN_GAIN, 1.0, &mut rng);
    let obs = normal_matrix(&mut rng, n, obs_dim, 1.0);
    let mean = policy.mean(obs.view()).expect("fixture shapes agree");
    let mut u = Array2::zeros((n, act_dim));
    let mut old = Vec::with_capacity(n);
    let cfg = PpoConfig::default();
    for i in 0..n {
        for j in 0..act_dim {
            u[(i, j)] = mean[(i, j)] + policy.log_std[j].exp() * rng.sample::<f64, _>(StandardNormal);
        }
        let lp = log_prob(
            mean.row(i).as_slice().unwrap(),
            &policy.log_std,
            u.row(i).as_slice().unwrap(),
        );
        // Alternate samples inside the trust region with ones clipped hard.
        let log_ratio = if i % 4 == 3 {
            (1.0 + 3.0 * cfg.clip_epsilon).ln()
        } else {
            rng.random_range(-0.1..0.1)
        };
        old.push(lp - log_ratio);
    }
    let batch = PpoBatch {
        obs,
        u,
        old_log_prob: old,
        advantages: (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        returns: (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
    };
    (policy, value, batch, cfg)
}

/// Checks the policy-network, log-std and value gradients of the PPO loss.
pub fn check_ppo(seed: u64, n: usize) -> Result<Vec<GradCheck>, LearnError> {
    let (policy, value, batch, cfg) = ppo_fixture(seed, n, 17, 3);
    let (_, grad) = ppo_loss_and_grad(&policy, &value, &batch, &cfg)?;
    let loss = |p: &GaussianPolicy, v: &Mlp| ppo_loss_and_grad(p, v, &batch, &cfg).map(|(l, _)| l.total).unwrap();

    let fd_net = central_difference(&policy.net.params, FD_STEP, |x| {
        let mut p = policy.clone();
        p.net.params.copy_from_slice(x);
        loss(&p, &value)
    });
    let fd_ls = central_difference(&policy.log_std, FD_STEP, |x| {
        let mut p = policy.clone();
        p.log_std.copy_from_slice(x);
        loss(&p, &value)
    });
    let fd_v = central_difference(&value.params, FD_STEP, |x| {
        let mut v = value.clone();
        v.params.copy_from_slice(x);
        loss(&policy, &v)
    });
    Ok(vec![
        compare("ppo policy net", &grad.policy, &fd_net),
        compare("ppo log_std", &grad.log_std, &fd_ls),
        compare("ppo value net", &grad.value, &fd_v),
    ])
}

/// Checks the Q regression, reparameterized actor and temperature gradients.
pub fn check_sac(seed: u64, n: usize) -> Result<Vec<GradCheck>, LearnError> {
    let (obs_dim, act_dim) = (17, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = NetworkConfig::default();
    let mut policy = GaussianPolicy::new(obs_dim, act_dim, &net, &mut rng);
    policy.net.params.iter_mut().for_each(|p| *p += 0.05 * rng.sample::<f64, _>(StandardNormal));
    policy.log_std = (0..act_dim).map(|_| rng.random_range(-1.0..0.0)).collect();
    let qs = net.sizes(obs_dim + act_dim, 1);
    let q1 = Mlp::orthogonal(&qs, crate::policy::HIDDEN_GAIN, 1.0, &mut rng);
    let q2 = Mlp::orthogonal(&qs, crate::policy::HIDDEN_GAIN, 1.0, &mut rng);
    let obs = normal_matrix(&mut rng, n, obs_dim, 1.0);
    let action = normal_matrix(&mut rng, n, act_dim, 0.5).mapv(f64::tanh);
    let eps = normal_matrix(&mut rng, n, act_dim, 1.0);
    let targets: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let alpha = 0.2;

    let x = q_input(obs.view(), action.view());
    let (_, gq) = q_loss_and_grad(&q1, x.view(), &targets)?;
    let fd_q = central_difference(&q1.params, FD_STEP, |p| {
        let mut q = q1.clone();
        q.params.copy_from_slice(p);
        q_loss_and_grad(&q, x.view(), &targets).unwrap().0
    });

    let (pl, gp) = policy_loss_and_grad(&policy, &q1, &q2, obs.view(), eps.view(), alpha)?;
    let actor_loss = |p: &GaussianPolicy| {
        policy_loss_and_grad(p, &q1, &q2, obs.view(), eps.view(), alpha)
            .unwrap()
            .0
            .loss
    };
    let fd_pn = central_difference(&policy.net.params, FD_STEP, |x| {
        let mut p = policy.clone();
        p.net.params.copy_from_slice(x);
        actor_loss(&p)
    });
    let fd_pls = central_difference(&policy.log_std, FD_STEP, |x| {
        let mut p = policy.clone();
        p.log_std.copy_from_slice(x);
        actor_loss(&p)
    });

    let target_entropy = -(act_dim as f64);
    let log_alpha = alpha.ln();
    let (_, ga) = temperature_loss_and_grad(log_alpha, &pl.log_probs, target_entropy);
    let fd_a = central_difference(&[log_alpha], FD_STEP, |x| {
        temperature_loss_and_grad(x[0], &pl.log_probs, target_entropy).0
    });

    Ok(vec![
        compare("sac q net", &gq, &fd_q),
        compare("sac actor net", &gp.net, &fd_pn),
        compare("sac actor log_std", &gp.log_std, &fd_pls),
        compare("sac temperature", &[ga], &fd_a),
    ])
}
