/// Generalized advantage estimates for one trajectory segment.
///
/// `bootstrap` is the value of the state after the last step; pass 0 when
/// the segment ended in a true terminal state. Returns (advantages, returns)
/// with returns = advantages + values.
pub fn gae(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "rewards and values must align");
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_zero_gives_one_step_residuals() {
        let (a, r) = gae(&[1.0, 2.0, 3.0], &[0.5, 0.5, 4.0], 9.0, 0.0, 0.95);
        assert_eq!(a, vec![0.5, 1.5, -1.0]);
        assert_eq!(r, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn lambda_zero_gives_td_errors() {
        let (a, _) = gae(&[1.0, 0.0], &[0.2, 0.3], 0.7, 0.5, 0.0);
        assert!((a[0] - (1.0 + 0.5 * 0.3 - 0.2)).abs() < 1e-15);
        assert!((a[1] - (0.0 + 0.5 * 0.7 - 0.3)).abs() < 1e-15);
    }
}
