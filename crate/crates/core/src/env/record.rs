//! Episode records: a JSON-lines step log plus a summary document.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use crate::dynamics::Violation;
use crate::error::RecordError;

pub const RECORD_FORMAT: &str = "capscan-episode/1";

/// Sim times at which coverage is reported, seconds.
pub const REPORT_TIMES: [f64; 3] = [60.0, 120.0, 150.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub format: String,
    pub seed: u64,
    pub config: EnvConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub sim_time: f64,
    pub action: Vec<f64>,
    pub reward: f64,
    pub coverage: f64,
    pub diff: f64,
    pub violation: Option<Violation>,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub header: EpisodeHeader,
    pub steps: Vec<StepRecord>,
    /// Not part of the serialized step log, which must be reproducible.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedCoverage {
    pub target_time: f64,
    /// Sim time of the first step at or past the target, if reached.
    pub sim_time: Option<f64>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub format: String,
    pub seed: u64,
    pub steps: usize,
    pub sim_time: f64,
    pub final_coverage: f64,
    pub total_reward: f64,
    pub termination: String,
    pub coverage_at: Vec<TimedCoverage>,
    pub wall_time_s: f64,
}

impl EpisodeRecord {
    pub fn new(seed: u64, config: EnvConfig) -> Self {
        Self {
            header: EpisodeHeader {
                format: RECORD_FORMAT.to_string(),
                seed,
                config,
            },
            steps: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn final_coverage(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.coverage)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn sim_time(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.sim_time)
    }

    /// "terminated:<violation>", "truncated", or "incomplete".
    pub fn termination(&self) -> String {
        match self.steps.last() {
            Some(s) if s.terminated => match s.violation {
                Some(v) => format!("terminated:{v}"),
                None => "terminated".into(),
            },
            Some(s) if s.truncated => "truncated".into(),
            _ => "incomplete".into(),
        }
    }

    /// Coverage at the first step whose sim time reaches `target`.
    pub fn coverage_at(&self, target: f64) -> TimedCoverage {
        let hit = self.steps.iter().find(|s| s.sim_time + 1e-9 >= target);
        TimedCoverage {
            target_time: target,
            sim_time: hit.map(|s| s.sim_time),
            coverage: hit.map(|s| s.coverage),
        }
    }

    pub fn summary(&self) -> EpisodeSummary {
        EpisodeSummary {
            format: RECORD_FORMAT.to_string(),
            seed: self.header.seed,
            steps: self.steps.len(),
            sim_time: self.sim_time(),
            final_coverage: self.final_coverage(),
            total_reward: self.total_reward(),
            termination: self.termination(),
            coverage_at: REPORT_TIMES.iter().map(|&t| self.coverage_at(t)).collect(),
            wall_time_s: self.wall_time_s,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), RecordError> {
        serde_json::to_writer(&mut w, &self.header).map_err(|source| RecordError::Json { line: 1, source })?;
        w.write_all(b"\n")?;
        for (i, s) in self.steps.iter().enumerate() {
            serde_json::to_writer(&mut w, s).map_err(|source| RecordError::Json { line: i + 2, source })?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        buf
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, RecordError> {
        let mut lines = r.lines().enumerate();
        let header: EpisodeHeader = match lines.next() {
            Some((_, line)) => {
                let line = line?;
                let value: serde_json::Value =
                    serde_json::from_str(&line).map_err(|source| RecordError::Json { line: 1, source })?;
                let tag = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
                if tag != RECORD_FORMAT {
                    return Err(RecordError::Format(tag.to_string()));
                }
                serde_json::from_value(value).map_err(|source| RecordError::Json { line: 1, source })?
            }
            None => return Err(RecordError::Empty),
        };
        let mut steps = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            steps.push(serde_json::from_str(&line).map_err(|source| RecordError::Json { line: i + 1, source })?);
        }
        Ok(Self {
            header,
            steps,
            wall_time_s: 0.0,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RecordError> {
        let f = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RecordError> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    /// Write `<stem>.jsonl` and `<stem>.summary.json` next to each other.
    pub fn save_with_summary(&self, dir: impl AsRef<Path>, stem: &str) -> Result<(), RecordError> {
        let dir = dir.as_ref();
        self.save(dir.join(format!("{stem}.jsonl")))?;
        let f = std::fs::File::create(dir.join(format!("{stem}.summary.json")))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(f), &self.summary())
            .map_err(|source| RecordError::Json { line: 0, source })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(n: usize, dt: f64) -> EpisodeRecord {
        let mut r = EpisodeRecord::new(7, EnvConfig::desk_sphere());
        for i in 0..n {
            r.steps.push(StepRecord {
                step: i + 1,
                sim_time: (i + 1) as f64 * dt,
                action: vec![0.1 * i as f64, -0.3],
                reward: -0.01,
                coverage: i as f64 * 0.1,
                diff: 0.1,
                violation: None,
                terminated: false,
                truncated: i + 1 == n,
            });
        }
        r
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let r = record(25, 0.1);
        let bytes = r.to_jsonl_bytes();
        let back = EpisodeRecord::read_jsonl(&bytes[..]).unwrap();
        assert_eq!(back.header, r.header);
        assert_eq!(back.steps, r.steps);
        assert_eq!(back.to_jsonl_bytes(), bytes);
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let text = "{\"format\":\"other/9\",\"seed\":1}\n";
        assert!(matches!(EpisodeRecord::read_jsonl(text.as_bytes()), Err(RecordError::Format(t)) if t == "other/9"));
        assert!(matches!(EpisodeRecord::read_jsonl("".as_bytes()), Err(RecordError::Empty)));
    }

    #[test]
    fn first_crossing_sampling() {
        let r = record(1600, 0.1);
        let c = r.coverage_at(60.0);
        // 600 steps of 0.1 s land within rounding of 60 s
        assert_eq!(c.sim_time.unwrap(), 600.0 * 0.1);
        let short = record(100, 0.1);
        assert_eq!(short.coverage_at(60.0).coverage, None);
        let s = r.summary();
        assert_eq!(s.termination, "truncated");
        assert_eq!(s.coverage_at.len(), 3);
    }
}
