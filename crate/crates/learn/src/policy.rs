use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::LearnError;
use crate::gaussian::clamp_log_std;
use crate::mlp::Mlp;

/// Network widths and init gains shared by every network in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub hidden_units: usize,
    pub num_layers: usize,
    /// Initial log standard deviation of the policy.
    pub init_log_std: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden_units: 128,
            num_layers: 2,
            init_log_std: 0.5f64.ln(),
        }
    }
}

impl NetworkConfig {
    pub fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend(std::iter::repeat_n(self.hidden_units, self.num_layers));
        s.push(output);
        s
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.hidden_units == 0 || self.num_layers == 0 {
            return Err(LearnError::Config("network needs at least one hidden layer of width > 0".into()));
        }
        Ok(())
    }
}

pub const HIDDEN_GAIN: f64 = std::f64::consts::SQRT_2;
pub const POLICY_HEAD_GAIN: f64 = 0.01;

/// Gaussian policy: the network gives the mean, the log standard deviation
/// is a free parameter vector shared by all states.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, cfg: &NetworkConfig, rng: &mut R) -> Self {
        let mut log_std = vec![cfg.init_log_std; act_dim];
        clamp_log_std(&mut log_std);
        Self {
            net: Mlp::orthogonal(&cfg.sizes(obs_dim, act_dim), HIDDEN_GAIN, POLICY_HEAD_GAIN, rng),
            log_std,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>, LearnError> {
        self.net.forward(obs)
    }

    /// Pre-squash sample u = μ + σ·ε for one observation.
    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>, LearnError> {
        let mean = self.net.forward_one(obs)?;
        Ok(mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }

    /// Deterministic action tanh(μ).
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, LearnError> {
        Ok(self.net.forward_one(obs)?.into_iter().map(f64::tanh).collect())
    }
}
