//! Rollout/update loops for PPO, SAC and a uniform-random baseline, with
//! windowed statistics and periodic checkpoints.
//!
//! Every random draw comes from a ChaCha8 stream derived from the run
//! seed, and rollouts use a single environment instance, so two runs with
//! the same seed and config produce identical statistics, episode records
//! and checkpoints.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use capscan_core::env::{CoverageEnv, EpisodeRecord};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{checkpoint_name, Checkpoint, CheckpointMeta};
use crate::error::LearnError;
use crate::gaussian::log_prob;
use crate::ppo::{PpoAgent, PpoConfig, Rollout};
use crate::replay::{ReplayBuffer, Transition};
use crate::sac::{SacAgent, SacBatch, SacConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Ppo,
    Sac,
    Random,
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Ppo => "ppo",
            Algo::Sac => "sac",
            Algo::Random => "random",
        })
    }
}

impl FromStr for Algo {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ppo" => Ok(Algo::Ppo),
            "sac" => Ok(Algo::Sac),
            "random" => Ok(Algo::Random),
            other => Err(LearnError::Config(format!("unknown algorithm {other:?} (ppo, sac, random)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomConfig {
    pub max_steps: u64,
}

impl Default for RandomConfig {
    fn default() -> Self {
        Self { max_steps: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algo: Algo,
    pub seed: u64,
    /// Env steps per statistics window.
    pub summary_freq: u64,
    /// Env steps between periodic checkpoints; 0 keeps only the initial
    /// and final ones.
    pub checkpoint_freq: u64,
    /// Stop after this many env steps while keeping the learning-rate
    /// schedule of the full `max_steps` run.
    pub step_budget: Option<u64>,
    pub ppo: PpoConfig,
    pub sac: SacConfig,
    pub random: RandomConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Ppo,
            seed: 0,
            summary_freq: 10_000,
            checkpoint_freq: 500_000,
            step_budget: None,
            ppo: PpoConfig::default(),
            sac: SacConfig::default(),
            random: RandomConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn max_steps(&self) -> u64 {
        match self.algo {
            Algo::Ppo => self.ppo.max_steps,
            Algo::Sac => self.sac.max_steps,
            Algo::Random => self.random.max_steps,
        }
    }

    pub fn set_max_steps(&mut self, n: u64) {
        match self.algo {
            Algo::Ppo => self.ppo.max_steps = n,
            Algo::Sac => self.sac.max_steps = n,
            Algo::Random => self.random.max_steps = n,
        }
    }

    pub fn learning_rate(&self) -> Option<f64> {
        match self.algo {
            Algo::Ppo => Some(self.ppo.learning_rate),
            Algo::Sac => Some(self.sac.learning_rate),
            Algo::Random => None,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        match self.algo {
            Algo::Ppo => self.ppo.learning_rate = lr,
            Algo::Sac => self.sac.learning_rate = lr,
            Algo::Random => {}
        }
    }

    fn lr_at(&self, step: u64) -> f64 {
        match self.algo {
            Algo::Ppo => self.ppo.lr_schedule.at(step, self.ppo.max_steps, self.ppo.learning_rate),
            Algo::Sac => self.sac.lr_schedule.at(step, self.sac.max_steps, self.sac.learning_rate),
            Algo::Random => f64::NAN,
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.summary_freq == 0 {
            return Err(LearnError::Config("summary_freq must be positive".into()));
        }
        match self.algo {
            Algo::Ppo => self.ppo.validate(),
            Algo::Sac => self.sac.validate(),
            Algo::Random => Ok(()),
        }
    }
}

/// One row of the statistics stream. Means cover the episodes that ended
/// and the updates that ran inside the window; empty windows give NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub step: u64,
    pub episodes: u64,
    pub mean_reward: f64,
    pub mean_episode_length: f64,
    pub mean_final_coverage: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub learning_rate: f64,
    pub temperature: f64,
}

pub const STATS_HEADER: &str = "step,episodes,mean_reward,mean_episode_length,mean_final_coverage,policy_loss,value_loss,entropy,learning_rate,temperature";

impl TrainStats {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.episodes,
            self.mean_reward,
            self.mean_episode_length,
            self.mean_final_coverage,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.learning_rate,
            self.temperature
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self, LearnError> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 10 {
            return Err(LearnError::Config(format!("stats row has {} fields, expected 10", f.len())));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| LearnError::Config(format!("bad integer {s:?}: {e}")));
        let num = |s: &str| s.parse::<f64>().map_err(|e| LearnError::Config(format!("bad number {s:?}: {e}")));
        Ok(Self {
            step: int(f[0])?,
            episodes: int(f[1])?,
            mean_reward: num(f[2])?,
            mean_episode_length: num(f[3])?,
            mean_final_coverage: num(f[4])?,
            policy_loss: num(f[5])?,
            value_loss: num(f[6])?,
            entropy: num(f[7])?,
            learning_rate: num(f[8])?,
            temperature: num(f[9])?,
        })
    }

    /// Parse a whole stats CSV, header included.
    pub fn read_csv(text: &str) -> Result<Vec<Self>, LearnError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == STATS_HEADER => {}
            other => return Err(LearnError::Config(format!("unexpected stats header {other:?}"))),
        }
        lines.filter(|l| !l.trim().is_empty()).map(Self::from_csv_row).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Initial,
    Periodic,
    Final,
}

pub trait TrainObserver {
    fn on_stats(&mut self, _stats: &TrainStats) -> Result<(), LearnError> {
        Ok(())
    }

    fn on_episode(&mut self, _index: u64, _record: &EpisodeRecord) -> Result<(), LearnError> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _ckpt: &Checkpoint, _kind: CheckpointKind) -> Result<(), LearnError> {
        Ok(())
    }
}

pub struct NullObserver;

impl TrainObserver for NullObserver {}

/// Keeps everything in memory; used by tests and the sweep driver.
#[derive(Debug, Default)]
pub struct MemoryObserver {
    pub keep_episodes: bool,
    pub stats: Vec<TrainStats>,
    pub episodes: Vec<EpisodeRecord>,
    pub checkpoints: Vec<(u64, CheckpointKind)>,
}

impl TrainObserver for MemoryObserver {
    fn on_stats(&mut self, stats: &TrainStats) -> Result<(), LearnError> {
        self.stats.push(*stats);
        Ok(())
    }

    fn on_episode(&mut self, _index: u64, record: &EpisodeRecord) -> Result<(), LearnError> {
        if self.keep_episodes {
            self.episodes.push(record.clone());
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, ckpt: &Checkpoint, kind: CheckpointKind) -> Result<(), LearnError> {
        self.checkpoints.push((ckpt.descriptor.train_step, kind));
        Ok(())
    }
}

/// Writes `stats.csv`, `checkpoints/*.ckpt` (plus `final.ckpt`) and,
/// optionally, every episode as `episodes/ep_NNNNNN.jsonl`.
pub struct DirectoryObserver {
    dir: PathBuf,
    stats: BufWriter<File>,
    save_episodes: bool,
}

impl DirectoryObserver {
    pub const STATS_FILE: &'static str = "stats.csv";
    pub const FINAL_CHECKPOINT: &'static str = "final.ckpt";

    pub fn create(dir: impl AsRef<Path>, save_episodes: bool) -> Result<Self, LearnError> {
        let dir = dir.as_ref().to_path_buf();
        let ck = dir.join("checkpoints");
        fs::create_dir_all(&ck).map_err(|e| LearnError::io(&ck, e))?;
        if save_episodes {
            let ep = dir.join("episodes");
            fs::create_dir_all(&ep).map_err(|e| LearnError::io(&ep, e))?;
        }
        let path = dir.join(Self::STATS_FILE);
        let file = File::create(&path).map_err(|e| LearnError::io(&path, e))?;
        let mut stats = BufWriter::new(file);
        writeln!(stats, "{STATS_HEADER}").map_err(|e| LearnError::io(&path, e))?;
        stats.flush().map_err(|e| LearnError::io(&path, e))?;
        Ok(Self {
            dir,
            stats,
            save_episodes,
        })
    }
}

impl TrainObserver for DirectoryObserver {
    fn on_stats(&mut self, stats: &TrainStats) -> Result<(), LearnError> {
        let path = self.dir.join(Self::STATS_FILE);
        writeln!(self.stats, "{}", stats.to_csv_row()).map_err(|e| LearnError::io(&path, e))?;
        self.stats.flush().map_err(|e| LearnError::io(&path, e))
    }

    fn on_episode(&mut self, index: u64, record: &EpisodeRecord) -> Result<(), LearnError> {
        if !self.save_episodes {
            return Ok(());
        }
        let path = self.dir.join("episodes").join(format!("ep_{index:06}.jsonl"));
        record
            .save(&path)
            .map_err(|e| LearnError::io(&path, std::io::Error::other(e.to_string())))
    }

    fn on_checkpoint(&mut self, ckpt: &Checkpoint, kind: CheckpointKind) -> Result<(), LearnError> {
        let path = match kind {
            CheckpointKind::Final => self.dir.join(Self::FINAL_CHECKPOINT),
            _ => self.dir.join("checkpoints").join(checkpoint_name(ckpt.descriptor.train_step)),
        };
        ckpt.save(path)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps: u64,
    pub episodes: u64,
    pub final_checkpoint: Checkpoint,
}

const STREAM_INIT: u64 = 1;
const STREAM_ACTION: u64 = 2;
const STREAM_UPDATE: u64 = 3;
const STREAM_EPISODE: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Env seeds of the episodes a run with `seed` plays, in order.
pub fn episode_seeds(seed: u64) -> impl Iterator<Item = u64> {
    let mut r = stream(seed, STREAM_EPISODE);
    std::iter::repeat_with(move || r.next_u64())
}

#[derive(Debug, Default)]
struct Window {
    episodes: u64,
    reward: f64,
    length: f64,
    coverage: f64,
    policy_loss: (f64, u32),
    value_loss: (f64, u32),
    entropy: (f64, u32),
    temperature: f64,
}

fn mean((s, n): (f64, u32)) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

impl Window {
    fn losses(&mut self, policy: f64, value: f64, entropy: f64) {
        self.policy_loss.0 += policy;
        self.policy_loss.1 += 1;
        self.value_loss.0 += value;
        self.value_loss.1 += 1;
        self.entropy.0 += entropy;
        self.entropy.1 += 1;
    }

    fn take(&mut self, step: u64, lr: f64) -> TrainStats {
        let n = self.episodes as f64;
        let per = |x: f64| if self.episodes == 0 { f64::NAN } else { x / n };
        let s = TrainStats {
            step,
            episodes: self.episodes,
            mean_reward: per(self.reward),
            mean_episode_length: per(self.length),
            mean_final_coverage: per(self.coverage),
            policy_loss: mean(self.policy_loss),
            value_loss: mean(self.value_loss),
            entropy: mean(self.entropy),
            learning_rate: lr,
            temperature: self.temperature,
        };
        let temperature = self.temperature;
        *self = Window {
            temperature,
            ..Window::default()
        };
        s
    }
}

struct StepOut {
    reward: f64,
    next_obs: Vec<f64>,
    terminated: bool,
    truncated: bool,
}

/// Drives one environment through consecutive episodes and keeps the
/// per-episode records and the statistics window.
struct Runner<'a> {
    env: &'a mut CoverageEnv,
    obs: Vec<f64>,
    record: EpisodeRecord,
    seeds: Box<dyn Iterator<Item = u64>>,
    episode_index: u64,
    step: u64,
    dt: f64,
    started: Instant,
    window: Window,
}

impl<'a> Runner<'a> {
    fn new(env: &'a mut CoverageEnv, seed: u64) -> Result<Self, LearnError> {
        let dt = env.config().control_dt();
        let record = EpisodeRecord::new(0, env.config().clone());
        let mut r = Self {
            env,
            obs: Vec::new(),
            record,
            seeds: Box::new(episode_seeds(seed)),
            episode_index: 0,
            step: 0,
            dt,
            started: Instant::now(),
            window: Window::default(),
        };
        r.begin_episode()?;
        Ok(r)
    }

    fn begin_episode(&mut self) -> Result<(), LearnError> {
        let seed = self.seeds.next().expect("endless seed stream");
        let o = self.env.reset(seed).map_err(|e| LearnError::Env {
            step: self.step,
            source: e,
        })?;
        self.obs = self.env.normalized(&o).to_vec();
        self.record = EpisodeRecord::new(seed, self.env.config().clone());
        self.started = Instant::now();
        Ok(())
    }

    fn step(&mut self, action: Vec<f64>, observer: &mut dyn TrainObserver) -> Result<StepOut, LearnError> {
        let r = self.env.step(&action).map_err(|e| LearnError::Env {
            step: self.step + 1,
            source: e,
        })?;
        self.step += 1;
        let n = self.env.step_count().expect("env was reset");
        self.record.push_result(n, self.dt, action, &r);
        let next_obs = self.env.normalized(&r.observation).to_vec();
        if r.terminated || r.truncated {
            self.record.wall_time_s = self.started.elapsed().as_secs_f64();
            self.window.episodes += 1;
            self.window.reward += self.record.total_reward();
            self.window.length += self.record.steps.len() as f64;
            self.window.coverage += self.record.final_coverage();
            observer.on_episode(self.episode_index, &self.record)?;
            self.episode_index += 1;
            self.begin_episode()?;
        } else {
            self.obs.clone_from(&next_obs);
        }
        Ok(StepOut {
            reward: r.reward,
            next_obs,
            terminated: r.terminated,
            truncated: r.truncated,
        })
    }
}

enum Agent {
    Ppo(Box<PpoAgent>),
    Sac(Box<SacAgent>),
    Random,
}

impl Agent {
    fn checkpoint(&self, cfg: &TrainConfig, meta: &CheckpointMeta, obs_dim: usize, act_dim: usize) -> Checkpoint {
        match self {
            Agent::Ppo(a) => Checkpoint::from_ppo(a, cfg.ppo.network, meta),
            Agent::Sac(a) => Checkpoint::from_sac(a, cfg.sac.network, meta),
            Agent::Random => Checkpoint::random(obs_dim, act_dim, meta),
        }
    }
}

/// Train on `env` for the configured number of env steps.
pub fn train(
    env: &mut CoverageEnv,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome, LearnError> {
    cfg.validate()?;
    if cfg.algo == Algo::Ppo {
        cfg.ppo.warn_ignored();
    }
    let obs_dim = capscan_core::env::OBS_DIM;
    let act_dim = env.action_dim();
    let mut init_rng = stream(cfg.seed, STREAM_INIT);
    let mut agent = match cfg.algo {
        Algo::Ppo => Agent::Ppo(Box::new(PpoAgent::new(obs_dim, act_dim, &cfg.ppo.network, &mut init_rng))),
        Algo::Sac => Agent::Sac(Box::new(SacAgent::new(obs_dim, act_dim, &cfg.sac, &mut init_rng))),
        Algo::Random => Agent::Random,
    };
    let env_cfg = env.config().clone();
    let meta = |step| CheckpointMeta {
        env: env_cfg.clone(),
        train_step: step,
        seed: cfg.seed,
    };
    let max_steps = cfg.step_budget.map_or(cfg.max_steps(), |b| b.min(cfg.max_steps()));
    observer.on_checkpoint(&agent.checkpoint(cfg, &meta(0), obs_dim, act_dim), CheckpointKind::Initial)?;
    if max_steps == 0 {
        return Ok(TrainOutcome {
            steps: 0,
            episodes: 0,
            final_checkpoint: agent.checkpoint(cfg, &meta(0), obs_dim, act_dim),
        });
    }

    let mut action_rng = stream(cfg.seed, STREAM_ACTION);
    let mut update_rng = stream(cfg.seed, STREAM_UPDATE);
    let mut runner = Runner::new(env, cfg.seed)?;
    let mut rollout = Rollout::new(obs_dim, act_dim);
    let mut replay = match cfg.algo {
        Algo::Sac => Some(ReplayBuffer::new(cfg.sac.replay_capacity)),
        _ => None,
    };
    if let Agent::Sac(a) = &agent {
        runner.window.temperature = a.alpha();
    } else {
        runner.window.temperature = f64::NAN;
    }

    while runner.step < max_steps {
        let step = runner.step;
        let obs = runner.obs.clone();
        match &mut agent {
            Agent::Ppo(a) => {
                let p = &cfg.ppo;
                let mean = a.policy.net.forward_one(&obs)?;
                let u = a.policy.sample(&obs, &mut action_rng)?;
                let lp = log_prob(&mean, &a.policy.log_std, &u);
                let v = a.value_of(&obs)?;
                let out = runner.step(u.iter().map(|x| x.tanh()).collect(), observer)?;
                rollout.push(&obs, &u, lp, v, out.reward);
                if out.terminated {
                    rollout.finish_segment(0.0, p.gamma, p.lambda);
                } else if out.truncated || rollout.segment_len() >= p.time_horizon || rollout.len() >= p.buffer_size
                {
                    let boot = a.value_of(&out.next_obs)?;
                    rollout.finish_segment(boot, p.gamma, p.lambda);
                }
                if rollout.len() >= p.buffer_size {
                    let lr = cfg.lr_at(step + 1);
                    let s = a.update(rollout.take_batch(), p, lr, &mut update_rng)?;
                    runner.window.losses(s.policy_loss, s.value_loss, s.entropy);
                }
            }
            Agent::Sac(a) => {
                let p = &cfg.sac;
                let action: Vec<f64> = if step < p.warmup_steps {
                    (0..act_dim).map(|_| action_rng.random_range(-1.0..=1.0)).collect()
                } else {
                    a.policy.sample(&obs, &mut action_rng)?.into_iter().map(f64::tanh).collect()
                };
                let out = runner.step(action.clone(), observer)?;
                let buf = replay.as_mut().expect("SAC keeps a replay buffer");
                buf.push(Transition {
                    obs,
                    action,
                    reward: out.reward,
                    next_obs: out.next_obs,
                    terminated: out.terminated,
                    truncated: out.truncated,
                });
                let done = step + 1;
                if done >= p.warmup_steps && buf.len() >= p.batch_size && done % p.steps_per_update == 0 {
                    let batch = SacBatch::from_transitions(&buf.sample(p.batch_size, &mut update_rng))?;
                    let lr = cfg.lr_at(done);
                    let s = a.update(&batch, p, lr, &mut update_rng)?;
                    runner.window.losses(s.policy_loss, 0.5 * (s.q1_loss + s.q2_loss), s.entropy);
                    runner.window.temperature = s.alpha;
                }
            }
            Agent::Random => {
                let action = (0..act_dim).map(|_| action_rng.random_range(-1.0..=1.0)).collect();
                runner.step(action, observer)?;
            }
        }
        let done = runner.step;
        if done % cfg.summary_freq == 0 {
            let stats = runner.window.take(done, cfg.lr_at(done));
            log::info!(
                "step {done}: {} episodes, reward {:.4}, coverage {:.2}%",
                stats.episodes,
                stats.mean_reward,
                stats.mean_final_coverage
            );
            observer.on_stats(&stats)?;
        }
        if cfg.checkpoint_freq > 0 && done % cfg.checkpoint_freq == 0 && done < max_steps {
            observer.on_checkpoint(&agent.checkpoint(cfg, &meta(done), obs_dim, act_dim), CheckpointKind::Periodic)?;
        }
    }
    let final_checkpoint = agent.checkpoint(cfg, &meta(runner.step), obs_dim, act_dim);
    observer.on_checkpoint(&final_checkpoint, CheckpointKind::Final)?;
    Ok(TrainOutcome {
        steps: runner.step,
        episodes: runner.episode_index,
        final_checkpoint,
    })
}
