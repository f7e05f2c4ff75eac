//! Deterministic evaluation of a trained actor.

use capscan_core::env::{run_episode, CoverageEnv, EpisodeRecord, EpisodeSummary, REPORT_TIMES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::LearnError;
use crate::policy::GaussianPolicy;

/// How an evaluation picks actions.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalPolicy {
    /// tanh of the Gaussian mean.
    Gaussian(GaussianPolicy),
    /// Uniform actions, seeded per episode from `seed` and the env seed.
    Random { seed: u64, act_dim: usize },
}

impl EvalPolicy {
    pub fn from_checkpoint(ck: &Checkpoint, seed: u64) -> Result<Self, LearnError> {
        Ok(match ck.policy()? {
            Some(p) => EvalPolicy::Gaussian(p),
            None => EvalPolicy::Random {
                seed,
                act_dim: ck.descriptor.act_dim,
            },
        })
    }

    pub fn act_dim(&self) -> usize {
        match self {
            EvalPolicy::Gaussian(p) => p.act_dim(),
            EvalPolicy::Random { act_dim, .. } => *act_dim,
        }
    }
}

pub fn evaluate_episode(env: &mut CoverageEnv, policy: &EvalPolicy, env_seed: u64) -> Result<EpisodeRecord, LearnError> {
    if policy.act_dim() != env.action_dim() {
        return Err(LearnError::Shape(format!(
            "policy emits {} actions, environment expects {}",
            policy.act_dim(),
            env.action_dim()
        )));
    }
    let norm = env.normalizer().clone();
    let mut failure = None;
    let record = match policy {
        EvalPolicy::Gaussian(p) => run_episode(env, env_seed, |o| match p.act_deterministic(&norm.apply(o)) {
            Ok(a) => a,
            Err(e) => {
                failure.get_or_insert(e);
                vec![f64::NAN; p.act_dim()]
            }
        }),
        EvalPolicy::Random { seed, act_dim } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            rng.set_stream(env_seed);
            run_episode(env, env_seed, |_| (0..*act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        }
    };
    if let Some(e) = failure {
        return Err(e);
    }
    record.map_err(|e| LearnError::Env { step: 0, source: e })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedMean {
    pub target_time: f64,
    /// Mean over the episodes that reached the target time.
    pub mean_coverage: Option<f64>,
    pub episodes_reaching: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_final_coverage: f64,
    pub std_final_coverage: f64,
    pub mean_episode_length: f64,
    pub mean_total_reward: f64,
    pub coverage_at: Vec<TimedMean>,
    pub per_episode: Vec<EpisodeSummary>,
}

impl EvalSummary {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let finals: Vec<f64> = records.iter().map(|r| r.final_coverage()).collect();
        let mean = finals.iter().sum::<f64>() / n;
        let var = finals.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
        let coverage_at = REPORT_TIMES
            .iter()
            .map(|&t| {
                let hits: Vec<f64> = records.iter().filter_map(|r| r.coverage_at(t).coverage).collect();
                TimedMean {
                    target_time: t,
                    mean_coverage: (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64),
                    episodes_reaching: hits.len(),
                }
            })
            .collect();
        Self {
            episodes: records.len(),
            mean_final_coverage: mean,
            std_final_coverage: var.sqrt(),
            mean_episode_length: records.iter().map(|r| r.steps.len() as f64).sum::<f64>() / n,
            mean_total_reward: records.iter().map(|r| r.total_reward()).sum::<f64>() / n,
            coverage_at,
            per_episode: records.iter().map(|r| r.summary()).collect(),
        }
    }
}

/// Evaluate on the env seeds `seed, seed + 1, …, seed + episodes − 1`.
pub fn evaluate(
    env: &mut CoverageEnv,
    policy: &EvalPolicy,
    seed: u64,
    episodes: usize,
) -> Result<(EvalSummary, Vec<EpisodeRecord>), LearnError> {
    let records = (0..episodes as u64)
        .map(|i| evaluate_episode(env, policy, seed.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((EvalSummary::from_records(&records), records))
}
