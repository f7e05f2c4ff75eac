//! Deterministic checkpoint evaluation with JSON outputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use capscan_core::env::{CoverageEnv, EnvConfig, EpisodeRecord};
use capscan_learn::checkpoint::Checkpoint;
use capscan_learn::eval::{evaluate, EvalPolicy, EvalSummary};

pub const SUMMARY_FILE: &str = "summary.json";
pub const EPISODES_FILE: &str = "episodes.jsonl";

/// Evaluate `episodes` episodes on env seeds `seed..seed + episodes`, in
/// the checkpoint's own environment unless `env` overrides it.
pub fn eval_checkpoint(
    ck: &Checkpoint,
    env: Option<EnvConfig>,
    episodes: usize,
    seed: u64,
) -> Result<(EvalSummary, Vec<EpisodeRecord>)> {
    let cfg = env.unwrap_or_else(|| ck.descriptor.env.clone());
    let mut env = CoverageEnv::new(cfg).context("building environment")?;
    let policy = EvalPolicy::from_checkpoint(ck, seed)?;
    Ok(evaluate(&mut env, &policy, seed, episodes)?)
}

/// `summary.json` plus one summary line per episode in `episodes.jsonl`.
pub fn write_eval(dir: &Path, summary: &EvalSummary) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(summary)?)?;
    let mut f = std::io::BufWriter::new(fs::File::create(dir.join(EPISODES_FILE))?);
    for e in &summary.per_episode {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn format_summary(s: &EvalSummary) -> String {
    let mut out = format!(
        "episodes {}\nfinal coverage {:.2} ± {:.2} %\nmean episode length {:.1} steps\nmean total reward {:.4}\n",
        s.episodes, s.mean_final_coverage, s.std_final_coverage, s.mean_episode_length, s.mean_total_reward
    );
    for t in &s.coverage_at {
        match t.mean_coverage {
            Some(c) => out += &format!("coverage @ {:.0} s: {c:.2} % ({} episodes)\n", t.target_time, t.episodes_reaching),
            None => out += &format!("coverage @ {:.0} s: not reached\n", t.target_time),
        }
    }
    out
}
