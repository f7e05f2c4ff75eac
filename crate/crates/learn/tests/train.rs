use capscan_core::env::{CoverageEnv, EnvConfig, PhantomSpec};
use capscan_learn::checkpoint::Checkpoint;
use capscan_learn::eval::{evaluate, EvalPolicy};
use capscan_learn::policy::NetworkConfig;
use capscan_learn::train::{
    episode_seeds, train, Algo, CheckpointKind, DirectoryObserver, MemoryObserver, TrainConfig, TrainStats,
};

fn small_env() -> CoverageEnv {
    let mut cfg = EnvConfig::desk_sphere();
    cfg.phantom = PhantomSpec::Sphere {
        vertices: 300,
        radius: 0.05,
    };
    cfg.max_steps = 40;
    CoverageEnv::new(cfg).unwrap()
}

fn small_config(algo: Algo) -> TrainConfig {
    let net = NetworkConfig {
        hidden_units: 16,
        ..NetworkConfig::default()
    };
    let mut cfg = TrainConfig {
        algo,
        seed: 42,
        summary_freq: 50,
        checkpoint_freq: 100,
        ..TrainConfig::default()
    };
    cfg.ppo.network = net;
    cfg.ppo.buffer_size = 64;
    cfg.ppo.batch_size = 32;
    cfg.ppo.time_horizon = 25;
    cfg.ppo.num_epoch = 2;
    cfg.sac.network = net;
    cfg.sac.batch_size = 16;
    cfg.sac.warmup_steps = 30;
    cfg.sac.replay_capacity = 100;
    cfg.set_max_steps(200);
    cfg
}

fn run(algo: Algo) -> (MemoryObserver, Checkpoint) {
    let mut env = small_env();
    let mut obs = MemoryObserver {
        keep_episodes: true,
        ..MemoryObserver::default()
    };
    let out = train(&mut env, &small_config(algo), &mut obs).unwrap();
    assert_eq!(out.steps, 200);
    (obs, out.final_checkpoint)
}

#[test]
fn training_is_bit_reproducible() {
    for algo in [Algo::Ppo, Algo::Sac, Algo::Random] {
        let (a, ca) = run(algo);
        let (b, cb) = run(algo);
        let rows = |o: &MemoryObserver| o.stats.iter().map(TrainStats::to_csv_row).collect::<Vec<_>>();
        assert_eq!(rows(&a), rows(&b), "{algo} stats differ");
        assert_eq!(a.stats.len(), 4);
        assert!(!a.episodes.is_empty());
        assert_eq!(a.episodes.len(), b.episodes.len());
        for (x, y) in a.episodes.iter().zip(&b.episodes) {
            assert_eq!(x.to_jsonl_bytes(), y.to_jsonl_bytes(), "{algo} episode records differ");
        }
        assert_eq!(ca.to_bytes(), cb.to_bytes(), "{algo} checkpoints differ");
        assert_eq!(a.checkpoints, b.checkpoints);
    }
}

#[test]
fn different_seeds_diverge() {
    let mut env = small_env();
    let mut cfg = small_config(Algo::Ppo);
    let mut a = MemoryObserver::default();
    train(&mut env, &cfg, &mut a).unwrap();
    cfg.seed = 43;
    let mut b = MemoryObserver::default();
    train(&mut env, &cfg, &mut b).unwrap();
    assert_ne!(
        a.stats.iter().map(TrainStats::to_csv_row).collect::<Vec<_>>(),
        b.stats.iter().map(TrainStats::to_csv_row).collect::<Vec<_>>()
    );
}

#[test]
fn checkpoints_follow_the_schedule() {
    let (obs, ck) = run(Algo::Ppo);
    assert_eq!(
        obs.checkpoints,
        vec![
            (0, CheckpointKind::Initial),
            (100, CheckpointKind::Periodic),
            (200, CheckpointKind::Final)
        ]
    );
    assert_eq!(ck.descriptor.train_step, 200);
    assert_eq!(ck.descriptor.seed, 42);
}

#[test]
fn zero_step_budget_writes_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut env = small_env();
    let mut cfg = small_config(Algo::Sac);
    cfg.set_max_steps(0);
    let mut obs = DirectoryObserver::create(dir.path(), true).unwrap();
    let out = train(&mut env, &cfg, &mut obs).unwrap();
    drop(obs);
    assert_eq!(out.steps, 0);
    let cks: Vec<_> = std::fs::read_dir(dir.path().join("checkpoints")).unwrap().collect();
    assert_eq!(cks.len(), 1);
    assert!(!dir.path().join(DirectoryObserver::FINAL_CHECKPOINT).exists());
    let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    assert!(TrainStats::read_csv(&stats).unwrap().is_empty());
    assert_eq!(std::fs::read_dir(dir.path().join("episodes")).unwrap().count(), 0);
}

#[test]
fn stats_windows_agree_with_episode_records() {
    let (obs, _) = run(Algo::Random);
    let mut eps = obs.episodes.iter();
    for s in &obs.stats {
        let window: Vec<_> = eps.by_ref().take(s.episodes as usize).collect();
        assert_eq!(window.len() as u64, s.episodes);
        if s.episodes == 0 {
            assert!(s.mean_reward.is_nan());
            continue;
        }
        let n = s.episodes as f64;
        let reward = window.iter().map(|r| r.total_reward()).sum::<f64>() / n;
        let cov = window.iter().map(|r| r.final_coverage()).sum::<f64>() / n;
        let len = window.iter().map(|r| r.steps.len() as f64).sum::<f64>() / n;
        assert_eq!(s.mean_reward, reward);
        assert_eq!(s.mean_final_coverage, cov);
        assert_eq!(s.mean_episode_length, len);
    }
    // Every recorded episode belongs to a window, and each plays its seed in order.
    assert!(eps.next().is_none());
    for (r, seed) in obs.episodes.iter().zip(episode_seeds(42)) {
        assert_eq!(r.header.seed, seed);
        // Per-step rewards add up to the episode total the window used.
        let sum: f64 = r.steps.iter().map(|s| s.reward).sum();
        assert_eq!(sum, r.total_reward());
    }
}

#[test]
fn directory_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut env = small_env();
    let cfg = small_config(Algo::Ppo);
    let mut obs = DirectoryObserver::create(dir.path(), true).unwrap();
    let out = train(&mut env, &cfg, &mut obs).unwrap();
    drop(obs);
    let stats = TrainStats::read_csv(&std::fs::read_to_string(dir.path().join("stats.csv")).unwrap()).unwrap();
    assert_eq!(stats.len(), 4);
    assert_eq!(stats.last().unwrap().step, 200);
    let fin = Checkpoint::load(dir.path().join(DirectoryObserver::FINAL_CHECKPOINT)).unwrap();
    assert_eq!(fin, out.final_checkpoint);
    let n_eps = std::fs::read_dir(dir.path().join("episodes")).unwrap().count() as u64;
    assert_eq!(n_eps, out.episodes);
    let first = capscan_core::env::EpisodeRecord::load(dir.path().join("episodes/ep_000000.jsonl")).unwrap();
    assert_eq!(first.header.seed, episode_seeds(42).next().unwrap());

    let policy = EvalPolicy::from_checkpoint(&fin, 0).unwrap();
    let (a, ra) = evaluate(&mut env, &policy, 5, 2).unwrap();
    let (b, rb) = evaluate(&mut env, &policy, 5, 2).unwrap();
    assert_eq!(a.mean_final_coverage, b.mean_final_coverage);
    assert_eq!(ra[1].to_jsonl_bytes(), rb[1].to_jsonl_bytes());
}
