use serde::{Deserialize, Serialize};

/// Smallest learning rate the linear schedule decays to.
pub const LR_FLOOR: f64 = 1e-10;

/// `lr0 · (1 − step/max_steps)`, never below [`LR_FLOOR`].
pub fn linear_lr(step: u64, max_steps: u64, lr0: f64) -> f64 {
    if max_steps == 0 {
        return LR_FLOOR;
    }
    let frac = 1.0 - (step.min(max_steps) as f64) / (max_steps as f64);
    (lr0 * frac).max(LR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Linear,
    Constant,
}

impl LrSchedule {
    pub fn at(self, step: u64, max_steps: u64, lr0: f64) -> f64 {
        match self {
            LrSchedule::Linear => linear_lr(step, max_steps, lr0),
            LrSchedule::Constant => lr0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(linear_lr(0, 1000, 1e-3), 1e-3);
        assert_eq!(linear_lr(1000, 1000, 1e-3), LR_FLOOR);
        assert_eq!(linear_lr(500, 1000, 1e-3), 5e-4);
        assert_eq!(linear_lr(5000, 1000, 1e-3), LR_FLOOR);
    }
}
