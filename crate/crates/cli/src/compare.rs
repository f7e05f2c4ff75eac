//! Side-by-side coverage of a manual session and a trained policy at fixed
//! sim times.

use anyhow::{ensure, Context, Result};
use capscan_core::env::{CoverageEnv, EpisodeRecord, TimedCoverage, REPORT_TIMES};
use capscan_learn::checkpoint::Checkpoint;
use capscan_learn::eval::{evaluate_episode, EvalPolicy};
use serde::Serialize;

pub const COMPARE_HEADER: &str = "time_s,manual_sim_time_s,manual_coverage,drl_sim_time_s,drl_coverage";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerColumn {
    pub name: String,
    pub cells: Vec<TimedCoverage>,
    pub final_coverage: f64,
    pub final_time: f64,
}

impl ControllerColumn {
    pub fn from_record(name: &str, record: &EpisodeRecord) -> Self {
        Self {
            name: name.to_string(),
            cells: REPORT_TIMES.iter().map(|&t| record.coverage_at(t)).collect(),
            final_coverage: record.final_coverage(),
            final_time: record.sim_time(),
        }
    }

    /// Reached cells never decrease and never follow a missing one.
    pub fn is_monotone(&self) -> bool {
        let mut last = f64::NEG_INFINITY;
        let mut missing = false;
        for c in &self.cells {
            match c.coverage {
                Some(v) if missing || v < last => return false,
                Some(v) => last = v,
                None => missing = true,
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub times: Vec<f64>,
    pub manual: ControllerColumn,
    pub drl: ControllerColumn,
}

fn cell(c: &TimedCoverage) -> (String, String) {
    match (c.sim_time, c.coverage) {
        (Some(t), Some(v)) => (format!("{t:.2}"), format!("{v:.2}")),
        _ => (String::new(), String::new()),
    }
}

impl CompareReport {
    pub fn from_records(manual: &EpisodeRecord, drl: &EpisodeRecord) -> Self {
        Self {
            times: REPORT_TIMES.to_vec(),
            manual: ControllerColumn::from_record("manual", manual),
            drl: ControllerColumn::from_record("drl", drl),
        }
    }

    pub fn is_monotone(&self) -> bool {
        self.times.windows(2).all(|w| w[0] < w[1]) && self.manual.is_monotone() && self.drl.is_monotone()
    }

    /// One row per report time plus a `final` row; unreached cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{COMPARE_HEADER}\n");
        for (i, t) in self.times.iter().enumerate() {
            let (mt, mc) = cell(&self.manual.cells[i]);
            let (dt, dc) = cell(&self.drl.cells[i]);
            out += &format!("{t:.0},{mt},{mc},{dt},{dc}\n");
        }
        out += &format!(
            "final,{:.2},{:.2},{:.2},{:.2}\n",
            self.manual.final_time, self.manual.final_coverage, self.drl.final_time, self.drl.final_coverage
        );
        out
    }

    pub fn to_text(&self) -> String {
        let fmt = |c: &TimedCoverage| match (c.sim_time, c.coverage) {
            (Some(t), Some(v)) => format!("{v:>6.2} % @ {t:>7.2} s"),
            _ => format!("{:>20}", "-"),
        };
        let mut out = format!("{:<10} | {:<20} | {:<20}\n", "time (s)", "manual", "DRL");
        out += &format!("{}\n", "-".repeat(56));
        for (i, t) in self.times.iter().enumerate() {
            out += &format!("{:<10.0} | {} | {}\n", t, fmt(&self.manual.cells[i]), fmt(&self.drl.cells[i]));
        }
        let fin = |c: &ControllerColumn| format!("{:>6.2} % @ {:>7.2} s", c.final_coverage, c.final_time);
        out += &format!("{:<10} | {} | {}\n", "final", fin(&self.manual), fin(&self.drl));
        out
    }
}

/// Run the checkpoint's deterministic policy in the manual session's
/// environment on env seed `seed` and tabulate both episodes.
pub fn compare(manual: &EpisodeRecord, ck: &Checkpoint, seed: u64) -> Result<(CompareReport, EpisodeRecord)> {
    ensure!(!manual.steps.is_empty(), "manual record has no steps");
    let mut env = CoverageEnv::new(manual.header.config.clone()).context("building the session environment")?;
    ensure!(
        ck.descriptor.act_dim == env.action_dim(),
        "checkpoint acts in {} dimensions, the session environment in {}",
        ck.descriptor.act_dim,
        env.action_dim()
    );
    let policy = EvalPolicy::from_checkpoint(ck, seed)?;
    let drl = evaluate_episode(&mut env, &policy, seed)?;
    Ok((CompareReport::from_records(manual, &drl), drl))
}
