use std::fs;
use std::path::Path;

use capscan_cli::compare::{compare, CompareReport, COMPARE_HEADER};
use capscan_cli::eval::{eval_checkpoint, write_eval, EPISODES_FILE, SUMMARY_FILE};
use capscan_cli::replay::{replay, ReplayOptions, COVERAGE_CSV};
use capscan_cli::train::{
    parse_sweep, read_curves, run_sweep, run_training, RunManifest, TrainOptions, CURVES_FILE, MANIFEST_FILE,
};
use capscan_cli::RunConfig;
use capscan_core::env::{run_episode, random_policy, CoverageEnv, EpisodeRecord, PhantomSpec};
use capscan_learn::checkpoint::{Checkpoint, CheckpointMeta};
use capscan_learn::policy::NetworkConfig;
use capscan_learn::train::{Algo, DirectoryObserver, TrainStats};

fn small(algo: Algo) -> RunConfig {
    let mut cfg = RunConfig::desk_sphere();
    cfg.env.phantom = PhantomSpec::Sphere {
        vertices: 400,
        radius: 0.05,
    };
    cfg.env.max_steps = 60;
    let net = NetworkConfig {
        hidden_units: 16,
        ..NetworkConfig::default()
    };
    let t = &mut cfg.train;
    t.algo = algo;
    t.seed = 9;
    t.summary_freq = 100;
    t.checkpoint_freq = 200;
    t.ppo.network = net;
    t.ppo.buffer_size = 100;
    t.ppo.batch_size = 50;
    t.ppo.num_epoch = 2;
    t.sac.network = net;
    t.sac.batch_size = 32;
    t.sac.warmup_steps = 50;
    t.set_max_steps(400);
    cfg
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn config_round_trips_and_hash_is_stable() {
    let cfg = small(Algo::Sac);
    let text = cfg.to_toml_string().unwrap();
    let back = RunConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.content_hash().unwrap(), cfg.content_hash().unwrap());
    let mut other = cfg.clone();
    other.train.seed += 1;
    assert_ne!(other.content_hash().unwrap(), cfg.content_hash().unwrap());
    assert!(RunConfig::from_toml_str("[train]\nalgo = \"dqn\"\n").is_err());
    assert!(RunConfig::from_toml_str("[train]\nbogus = 1\n").is_err());
    assert!(RunConfig::from_toml_str("[train.ppo]\nclip_epsilon = -1.0\n").is_err());
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk_sphere.toml", "stomach.toml"] {
        let cfg = RunConfig::load(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e:#}"));
        cfg.validate().unwrap();
    }
    let desk = RunConfig::load(dir.join("desk_sphere.toml")).unwrap();
    assert_eq!(desk.env, RunConfig::desk_sphere().env);
}

#[test]
fn zero_step_run_writes_manifest_and_initial_checkpoint_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(Algo::Ppo);
    cfg.train.set_max_steps(0);
    let r = run_training(&cfg, dir.path(), TrainOptions::default()).unwrap();
    assert_eq!(r.outcome.steps, 0);
    assert_eq!(files(dir.path()), vec!["checkpoints", "config.toml", MANIFEST_FILE, "stats.csv"]);
    assert_eq!(files(&dir.path().join("checkpoints")).len(), 1);
    let m = RunManifest::load(dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.config, cfg);
    assert_eq!(m.algorithm, Algo::Ppo);
    assert_eq!(m.max_steps, 0);
    let snap = RunConfig::load(dir.path().join("config.toml")).unwrap();
    assert_eq!(snap, cfg);
}

#[test]
fn manifest_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small(Algo::Sac);
    run_training(&cfg, a.path(), TrainOptions { save_episodes: true }).unwrap();
    let m = RunManifest::load(a.path().join(MANIFEST_FILE)).unwrap();
    run_training(&m.config, b.path(), TrainOptions { save_episodes: true }).unwrap();
    for f in ["stats.csv", "final.ckpt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let eps = files(&a.path().join("episodes"));
    assert!(!eps.is_empty());
    assert_eq!(eps, files(&b.path().join("episodes")));
    for e in &eps {
        assert_eq!(
            fs::read(a.path().join("episodes").join(e)).unwrap(),
            fs::read(b.path().join("episodes").join(e)).unwrap()
        );
    }
    // Every record the trainer wrote re-simulates exactly.
    for e in &eps {
        let rec = EpisodeRecord::load(a.path().join("episodes").join(e)).unwrap();
        let r = replay(&rec, &ReplayOptions::default()).unwrap();
        assert!(r.divergence.is_none(), "{e}: {:?}", r.divergence);
        assert_eq!(r.steps_checked, rec.steps.len());
    }
}

#[test]
fn sweep_parsing() {
    assert_eq!(parse_sweep("lr=1e-3,5e-4").unwrap(), vec![1e-3, 5e-4]);
    assert!(parse_sweep("1e-3").is_err());
    assert!(parse_sweep("lr=").is_err());
    assert!(parse_sweep("lr=1e-3,-2").is_err());
    assert!(parse_sweep("lr=1e-3,1e-3").is_err());
}

#[test]
fn two_rate_sweep_gives_two_runs_and_two_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(Algo::Ppo);
    let r = run_sweep(&cfg, &[1e-3, 5e-4], dir.path(), TrainOptions::default()).unwrap();
    assert_eq!(r.runs.len(), 2);
    for (lr, d) in &r.runs {
        let m = RunManifest::load(d.join(MANIFEST_FILE)).unwrap();
        assert_eq!(m.learning_rate, Some(*lr));
        assert!(d.join(DirectoryObserver::FINAL_CHECKPOINT).exists());
    }
    let series = read_curves(&fs::read_to_string(dir.path().join(CURVES_FILE)).unwrap()).unwrap();
    assert_eq!(series.len(), 2);
    for s in &series {
        assert_eq!(s.points.len(), 4);
        let own = TrainStats::read_csv(
            &fs::read_to_string(dir.path().join(format!("lr_{:e}", s.learning_rate)).join("stats.csv")).unwrap(),
        )
        .unwrap();
        for (p, st) in s.points.iter().zip(&own) {
            assert_eq!(p.step, st.step);
            assert!(p.value_loss.to_bits() == st.value_loss.to_bits());
        }
    }
}

#[test]
fn curves_validation_rejects_bad_files() {
    let h = capscan_cli::train::CURVES_HEADER;
    assert!(read_curves("a,b\n").is_err());
    assert!(read_curves(&format!("{h}\nlr=1e-3,0.001,10,1,2\n")).is_err());
    assert!(read_curves(&format!("{h}\nlr=5e-4,0.001,10,1,2,3\n")).is_err());
    assert!(read_curves(&format!("{h}\nlr=1e-3,0.001,20,1,2,3\nlr=1e-3,0.001,10,1,2,3\n")).is_err());
    assert!(read_curves(&format!("{h}\nlr=1e-3,0.001,10,x,2,3\n")).is_err());
    assert_eq!(read_curves(&format!("{h}\nlr=1e-3,0.001,10,NaN,2,3\n")).unwrap().len(), 1);
}

fn random_checkpoint(cfg: &RunConfig, net: NetworkConfig) -> Checkpoint {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let agent = capscan_learn::ppo::PpoAgent::new(17, 2, &net, &mut rng);
    Checkpoint::from_ppo(
        &agent,
        net,
        &CheckpointMeta {
            env: cfg.env.clone(),
            train_step: 0,
            seed: 4,
        },
    )
}

#[test]
fn eval_is_deterministic_and_bounded() {
    let cfg = small(Algo::Ppo);
    let ck = random_checkpoint(&cfg, cfg.train.ppo.network);
    let (a, _) = eval_checkpoint(&ck, None, 5, 3).unwrap();
    assert_eq!(a.episodes, 5);
    for e in &a.per_episode {
        assert!((0.0..=100.0).contains(&e.final_coverage));
    }
    let (x, rx) = eval_checkpoint(&ck, None, 1, 11).unwrap();
    let (y, ry) = eval_checkpoint(&ck, None, 1, 11).unwrap();
    assert_eq!(x.mean_final_coverage, y.mean_final_coverage);
    assert_eq!(rx[0].to_jsonl_bytes(), ry[0].to_jsonl_bytes());

    let dir = tempfile::tempdir().unwrap();
    write_eval(dir.path(), &a).unwrap();
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    for key in ["mean_final_coverage", "std_final_coverage", "mean_episode_length", "coverage_at"] {
        assert!(s.get(key).is_some(), "{key}");
    }
    assert_eq!(fs::read_to_string(dir.path().join(EPISODES_FILE)).unwrap().lines().count(), 5);

    let mut wrong = ck.clone();
    wrong.descriptor.act_dim = 3;
    assert!(eval_checkpoint(&wrong, None, 1, 0).is_err());
}

fn long_record(policy_seed: Option<u64>) -> EpisodeRecord {
    let mut cfg = small(Algo::Random);
    cfg.env.max_steps = 1600;
    let mut env = CoverageEnv::new(cfg.env).unwrap();
    match policy_seed {
        Some(s) => run_episode(&mut env, 21, random_policy(s, 2)).unwrap(),
        None => run_episode(&mut env, 21, |_| vec![0.0, 0.0]).unwrap(),
    }
}

#[test]
fn replay_checks_every_step_and_writes_snapshots() {
    let rec = long_record(Some(5));
    let dir = tempfile::tempdir().unwrap();
    let opts = ReplayOptions {
        out_dir: Some(dir.path().to_path_buf()),
        snapshot_times: vec![2.0, 1.0, 4.0],
    };
    let r = replay(&rec, &opts).unwrap();
    assert!(r.divergence.is_none(), "{:?}", r.divergence);
    assert_eq!(r.final_coverage, rec.final_coverage());
    let counts: Vec<usize> = r.snapshots.iter().map(|s| s.covered_vertices).collect();
    assert_eq!(r.snapshots.iter().map(|s| s.target_time).collect::<Vec<_>>(), vec![1.0, 2.0, 4.0]);
    assert!(counts.windows(2).all(|w| w[0] < w[1]), "{counts:?}");
    for s in &r.snapshots {
        let bytes = fs::read(s.path.as_ref().unwrap()).unwrap();
        let colors = capscan_core::geometry::io::read_ply_colors(&bytes).unwrap();
        let blue = colors.iter().filter(|c| **c == capscan_core::geometry::io::VISITED_COLOR).count();
        assert_eq!(blue, s.covered_vertices);
    }
    let csv = fs::read_to_string(dir.path().join(COVERAGE_CSV)).unwrap();
    assert_eq!(csv.lines().count(), rec.steps.len() + 1);

    let mut tampered = rec.clone();
    tampered.steps[17].reward += 1e-12;
    let d = replay(&tampered, &ReplayOptions::default()).unwrap().divergence.unwrap();
    assert_eq!(d.step, 18);
    assert_eq!(d.field, "reward");
    assert!(d.to_string().contains("step 18"));

    let mut extra = rec.clone();
    let mut last = extra.steps.last().unwrap().clone();
    last.step += 1;
    extra.steps.push(last);
    let d = replay(&extra, &ReplayOptions::default()).unwrap().divergence.unwrap();
    assert_eq!(d.field, "episode end");
}

#[test]
fn compare_reports_identical_controllers_equally() {
    let cfg = small(Algo::Ppo);
    let mut env_cfg = cfg.env.clone();
    env_cfg.max_steps = 1600;
    let ck = random_checkpoint(
        &RunConfig {
            env: env_cfg.clone(),
            ..cfg.clone()
        },
        cfg.train.ppo.network,
    );
    let mut env = CoverageEnv::new(env_cfg).unwrap();
    let policy = capscan_learn::eval::EvalPolicy::from_checkpoint(&ck, 0).unwrap();
    let manual = capscan_learn::eval::evaluate_episode(&mut env, &policy, 21).unwrap();
    let (report, drl) = compare(&manual, &ck, 21).unwrap();
    assert_eq!(drl.to_jsonl_bytes(), manual.to_jsonl_bytes());
    assert_eq!(report.manual.cells, report.drl.cells);
    assert!(report.is_monotone());
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], COMPARE_HEADER);
    assert!(lines[1].starts_with("60,") && lines[2].starts_with("120,") && lines[3].starts_with("150,"));
    assert!(lines[4].starts_with("final,"));
    let text = report.to_text();
    assert!(text.contains("manual") && text.contains("DRL"));
}

#[test]
fn zero_action_manual_column_is_flat() {
    let manual = long_record(None);
    let drl = long_record(Some(8));
    let report = CompareReport::from_records(&manual, &drl);
    let cells: Vec<f64> = report.manual.cells.iter().map(|c| c.coverage.unwrap()).collect();
    assert_eq!(cells[0], cells[1]);
    assert_eq!(cells[1], cells[2]);
    assert!(report.is_monotone());
}

#[test]
fn short_manual_record_leaves_cells_empty() {
    let mut manual = long_record(Some(2));
    manual.steps.truncate(700);
    let drl = long_record(Some(3));
    let report = CompareReport::from_records(&manual, &drl);
    assert!(report.manual.cells[0].coverage.is_some());
    assert!(report.manual.cells[1].coverage.is_none());
    assert!(report.manual.cells[2].coverage.is_none());
    assert!(report.is_monotone());
    let row = report.to_csv().lines().nth(2).unwrap().to_string();
    assert!(row.starts_with("120,,,"), "{row}");
}
