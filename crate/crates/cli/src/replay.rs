//! Re-simulate an episode record, check it step by step, and render
//! coverage snapshots.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use capscan_core::env::{CoverageEnv, EpisodeRecord, StepRecord};
use capscan_core::geometry::save_ply;
use serde::Serialize;

pub const COVERAGE_CSV: &str = "coverage.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Divergence {
    /// 1-based control step.
    pub step: usize,
    pub field: String,
    pub recorded: String,
    pub replayed: String,
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "step {}: {} recorded {} but re-simulation gives {}",
            self.step, self.field, self.recorded, self.replayed
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    pub out_dir: Option<PathBuf>,
    /// Sim times for PLY snapshots; each uses the first step at or past it.
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub target_time: f64,
    pub step: usize,
    pub sim_time: f64,
    pub covered_vertices: usize,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub steps_checked: usize,
    pub final_coverage: f64,
    pub divergence: Option<Divergence>,
    pub snapshots: Vec<Snapshot>,
    pub coverage_csv: Option<PathBuf>,
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a == b)
}

fn check_step(want: &StepRecord, got: &StepRecord) -> Option<Divergence> {
    let d = |field: &str, r: String, p: String| {
        Some(Divergence {
            step: want.step,
            field: field.to_string(),
            recorded: r,
            replayed: p,
        })
    };
    if want.step != got.step {
        return d("step index", want.step.to_string(), got.step.to_string());
    }
    for (name, a, b) in [
        ("sim_time", want.sim_time, got.sim_time),
        ("reward", want.reward, got.reward),
        ("coverage", want.coverage, got.coverage),
        ("diff", want.diff, got.diff),
    ] {
        if !same(a, b) {
            return d(name, format!("{a:?}"), format!("{b:?}"));
        }
    }
    if want.violation != got.violation {
        return d("violation", format!("{:?}", want.violation), format!("{:?}", got.violation));
    }
    if want.terminated != got.terminated {
        return d("terminated", want.terminated.to_string(), got.terminated.to_string());
    }
    if want.truncated != got.truncated {
        return d("truncated", want.truncated.to_string(), got.truncated.to_string());
    }
    None
}

/// Reset with the recorded seed and config, feed the recorded actions, and
/// compare every step. Stops at the first divergence.
pub fn replay(record: &EpisodeRecord, opts: &ReplayOptions) -> Result<ReplayReport> {
    let mut env = CoverageEnv::new(record.header.config.clone()).context("building the recorded environment")?;
    env.reset(record.header.seed)?;
    let dt = env.config().control_dt();
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut times: Vec<f64> = opts.snapshot_times.clone();
    times.sort_by(f64::total_cmp);
    let mut pending = times.into_iter().peekable();
    let mut snapshots = Vec::new();
    let mut csv = vec!["step,sim_time,coverage,reward".to_string()];
    let mut shadow = EpisodeRecord::new(record.header.seed, record.header.config.clone());
    let mut divergence = None;

    for (i, want) in record.steps.iter().enumerate() {
        if env.is_finished() {
            divergence = Some(Divergence {
                step: want.step,
                field: "episode end".into(),
                recorded: "step present".into(),
                replayed: format!("episode ended after step {i}"),
            });
            break;
        }
        let r = env.step(&want.action).with_context(|| format!("re-simulating step {}", i + 1))?;
        shadow.push_result(env.step_count()?, dt, want.action.clone(), &r);
        let got = shadow.steps.last().unwrap();
        if let Some(d) = check_step(want, got) {
            divergence = Some(d);
            break;
        }
        csv.push(format!("{},{},{},{}", got.step, got.sim_time, got.coverage, got.reward));
        while let Some(&t) = pending.peek() {
            if got.sim_time + 1e-9 < t {
                break;
            }
            pending.next();
            let tracker = env.tracker()?;
            let path = match &opts.out_dir {
                Some(dir) => {
                    let p = dir.join(format!("snapshot_{t:06.1}s.ply"));
                    save_ply(&p, &env.world().mesh, Some(&tracker.colors()))
                        .with_context(|| format!("writing {}", p.display()))?;
                    Some(p)
                }
                None => None,
            };
            snapshots.push(Snapshot {
                target_time: t,
                step: got.step,
                sim_time: got.sim_time,
                covered_vertices: tracker.visible_count(),
                path,
            });
        }
    }
    let coverage_csv = match &opts.out_dir {
        Some(dir) => {
            let p = dir.join(COVERAGE_CSV);
            fs::write(&p, csv.join("\n") + "\n")?;
            Some(p)
        }
        None => None,
    };
    Ok(ReplayReport {
        steps_checked: shadow.steps.len(),
        final_coverage: shadow.final_coverage(),
        divergence,
        snapshots,
        coverage_csv,
    })
}

pub fn load_record(path: &Path) -> Result<EpisodeRecord> {
    EpisodeRecord::load(path).with_context(|| format!("reading episode record {}", path.display()))
}
