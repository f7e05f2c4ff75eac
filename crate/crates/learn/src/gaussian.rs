//! Diagonal Gaussian policies, optionally squashed through tanh.

use std::f64::consts::PI;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Keeps the tanh log-density correction finite at saturation.
pub const SQUASH_EPS: f64 = 1e-6;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

pub fn clamp_log_std(log_std: &mut [f64]) {
    log_std.iter_mut().for_each(|s| *s = s.clamp(LOG_STD_MIN, LOG_STD_MAX));
}

/// log N(u; μ, diag σ²) summed over dimensions.
pub fn log_prob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(u)
        .map(|((m, s), x)| {
            let z = (x - m) / s.exp();
            -0.5 * z * z - s - HALF_LOG_2PI
        })
        .sum()
}

/// Differential entropy of the (unsquashed) Gaussian.
pub fn entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 + HALF_LOG_2PI).sum()
}

/// Σ log(1 − tanh(u)² + ε).
pub fn squash_correction(u: &[f64]) -> f64 {
    u.iter().map(|x| (1.0 - x.tanh().powi(2) + SQUASH_EPS).ln()).sum()
}

/// Log-density of a = tanh(u) for u ~ N(μ, σ²).
pub fn squashed_log_prob(mean: &[f64], log_std: &[f64], u: &[f64]) -> f64 {
    log_prob(mean, log_std, u) - squash_correction(u)
}

/// Density of the squashed distribution at `a` ∈ (−1, 1), for tests and
/// diagnostics. Uses u = atanh(a).
pub fn squashed_density(mean: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    let u: Vec<f64> = a.iter().map(|x| x.atanh()).collect();
    squashed_log_prob(mean, log_std, &u).exp()
}

pub fn standard_normal_log_density(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}
