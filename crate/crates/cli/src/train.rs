//! Training runs, run manifests and learning-rate sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use capscan_core::env::{CoverageEnv, RECORD_FORMAT};
use capscan_learn::checkpoint::CHECKPOINT_VERSION;
use capscan_learn::train::{train, Algo, DirectoryObserver, TrainOutcome, TrainStats, STATS_HEADER};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "capscan-manifest/1";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const CURVES_FILE: &str = "curves.csv";
pub const CURVES_HEADER: &str = "series,learning_rate,step,reward,policy_loss,value_loss";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub checkpoint: u32,
    pub episode_record: String,
    pub stats_header: String,
}

impl Default for FormatVersions {
    fn default() -> Self {
        Self {
            checkpoint: CHECKPOINT_VERSION,
            episode_record: RECORD_FORMAT.to_string(),
            stats_header: STATS_HEADER.to_string(),
        }
    }
}

/// Everything needed to reproduce a run: the full config snapshot, its
/// hash, the seed and the on-disk format versions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub run_id: String,
    pub algorithm: Algo,
    pub seed: u64,
    pub learning_rate: Option<f64>,
    pub max_steps: u64,
    pub config_hash: String,
    pub output_dir: PathBuf,
    pub formats: FormatVersions,
    pub tool_version: String,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig, output_dir: &Path) -> Result<Self> {
        let hash = cfg.content_hash()?;
        let t = &cfg.train;
        Ok(Self {
            format: MANIFEST_FORMAT.to_string(),
            run_id: format!("{}-seed{}-{}", t.algo, t.seed, &hash[..12]),
            algorithm: t.algo,
            seed: t.seed,
            learning_rate: t.learning_rate(),
            max_steps: t.step_budget.map_or(t.max_steps(), |b| b.min(t.max_steps())),
            config_hash: hash,
            output_dir: output_dir.to_path_buf(),
            formats: FormatVersions::default(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        ensure!(m.format == MANIFEST_FORMAT, "unsupported manifest format {:?}", m.format);
        ensure!(
            m.config.content_hash()? == m.config_hash,
            "manifest config does not match its recorded hash"
        );
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    /// Write every training episode as a JSONL record.
    pub save_episodes: bool,
}

#[derive(Debug)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub outcome: TrainOutcome,
}

/// Train into `out_dir`: manifest and config snapshot first, then stats,
/// checkpoints and (optionally) episode records.
pub fn run_training(cfg: &RunConfig, out_dir: &Path, opts: TrainOptions) -> Result<RunResult> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let manifest = RunManifest::new(cfg, out_dir)?;
    let mpath = out_dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("writing {}", mpath.display()))?;
    fs::write(out_dir.join(CONFIG_SNAPSHOT), cfg.to_toml_string()?)?;

    let mut env = CoverageEnv::new(cfg.env.clone()).context("building environment")?;
    let mut observer = DirectoryObserver::create(out_dir, opts.save_episodes)?;
    let outcome = train(&mut env, &cfg.train, &mut observer).context("training failed")?;
    log::info!(
        "{}: {} steps, {} episodes -> {}",
        manifest.run_id,
        outcome.steps,
        outcome.episodes,
        out_dir.display()
    );
    Ok(RunResult { manifest, outcome })
}

/// Parse `lr=a,b,c`.
pub fn parse_sweep(spec: &str) -> Result<Vec<f64>> {
    let Some(list) = spec.trim().strip_prefix("lr=") else {
        bail!("sweep must look like lr=a,b,c (got {spec:?})");
    };
    let lrs = list
        .split(',')
        .map(|s| {
            let v: f64 = s.trim().parse().with_context(|| format!("bad learning rate {s:?}"))?;
            ensure!(v.is_finite() && v > 0.0, "learning rate must be positive, got {v}");
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    ensure!(!lrs.is_empty(), "empty sweep");
    for (i, a) in lrs.iter().enumerate() {
        ensure!(!lrs[..i].contains(a), "learning rate {a} listed twice");
    }
    Ok(lrs)
}

pub fn series_name(lr: f64) -> String {
    format!("lr={lr:e}")
}

#[derive(Debug)]
pub struct SweepResult {
    pub runs: Vec<(f64, PathBuf)>,
    pub curves: PathBuf,
}

/// One run per learning rate under `out_dir/lr_<lr>/`, then a combined
/// curves CSV with one series per rate.
pub fn run_sweep(cfg: &RunConfig, lrs: &[f64], out_dir: &Path, opts: TrainOptions) -> Result<SweepResult> {
    ensure!(cfg.train.algo != Algo::Random, "a learning-rate sweep needs ppo or sac");
    fs::create_dir_all(out_dir)?;
    let mut runs = Vec::new();
    let mut rows = vec![CURVES_HEADER.to_string()];
    for &lr in lrs {
        let mut c = cfg.clone();
        c.train.set_learning_rate(lr);
        let dir = out_dir.join(format!("lr_{lr:e}"));
        run_training(&c, &dir, opts)?;
        let text = fs::read_to_string(dir.join(DirectoryObserver::STATS_FILE))?;
        for s in TrainStats::read_csv(&text)? {
            rows.push(format!(
                "{},{},{},{},{},{}",
                series_name(lr),
                lr,
                s.step,
                s.mean_reward,
                s.policy_loss,
                s.value_loss
            ));
        }
        runs.push((lr, dir));
    }
    let curves = out_dir.join(CURVES_FILE);
    fs::write(&curves, rows.join("\n") + "\n")?;
    Ok(SweepResult { runs, curves })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub name: String,
    pub learning_rate: f64,
    pub points: Vec<CurvePoint>,
}

/// Parse and validate a combined curves CSV: exact header, six fields per
/// row, a series name consistent with its learning rate, strictly
/// increasing steps within a series, and finite losses where present.
pub fn read_curves(text: &str) -> Result<Vec<CurveSeries>> {
    let mut lines = text.lines();
    ensure!(lines.next().map(str::trim) == Some(CURVES_HEADER), "unexpected curves header");
    let mut out: Vec<CurveSeries> = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 6, "row {}: {} fields, expected 6", i + 2, f.len());
        let lr: f64 = f[1].parse().with_context(|| format!("row {}: learning rate", i + 2))?;
        ensure!(f[0] == series_name(lr), "row {}: series {:?} does not match rate {lr}", i + 2, f[0]);
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().with_context(|| format!("row {}: {what}", i + 2))?;
            ensure!(!v.is_infinite(), "row {}: {what} is infinite", i + 2);
            Ok(v)
        };
        let p = CurvePoint {
            step: f[2].parse().with_context(|| format!("row {}: step", i + 2))?,
            reward: num(f[3], "reward")?,
            policy_loss: num(f[4], "policy loss")?,
            value_loss: num(f[5], "value loss")?,
        };
        match out.iter_mut().find(|s| s.name == f[0]) {
            Some(s) => {
                ensure!(
                    s.points.last().is_none_or(|q| q.step < p.step),
                    "row {}: steps not increasing in {}",
                    i + 2,
                    s.name
                );
                s.points.push(p);
            }
            None => out.push(CurveSeries {
                name: f[0].to_string(),
                learning_rate: lr,
                points: vec![p],
            }),
        }
    }
    Ok(out)
}
