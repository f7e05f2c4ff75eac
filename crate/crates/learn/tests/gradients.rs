use capscan_learn::gradcheck::{check_ppo, check_sac, GradCheck};

const TOL: f64 = 1e-4;

fn assert_all(checks: &[GradCheck]) {
    for c in checks {
        println!("{}: {} params, max rel err {:.3e} at {}", c.name, c.params, c.max_rel_error, c.worst_index);
    }
    for c in checks {
        assert!(c.max_rel_error <= TOL, "{} gradient off: {c:?}", c.name);
    }
}

#[test]
fn ppo_gradients_match_central_differences() {
    for seed in [1] {
        assert_all(&check_ppo(seed, 8).unwrap());
    }
}

#[test]
fn sac_gradients_match_central_differences() {
    for seed in [1] {
        assert_all(&check_sac(seed, 8).unwrap());
    }
}
