use crate::error::GeometryError;

use super::io::{Rgb, UNVISITED_COLOR, VISITED_COLOR};

/// Cumulative per-vertex coverage for one episode.
///
/// Each vertex counts at most once, so coverage stays within [0, 100] and
/// never decreases.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTracker {
    visited: Vec<bool>,
    visible_count: usize,
    current_coverage: f64,
    previous_coverage: f64,
}

impl CoverageTracker {
    pub fn new(vertice_count: usize) -> Self {
        Self {
            visited: vec![false; vertice_count],
            visible_count: 0,
            current_coverage: 0.0,
            previous_coverage: 0.0,
        }
    }

    pub fn clear(&mut self) {
        self.visited.iter_mut().for_each(|v| *v = false);
        self.visible_count = 0;
        self.current_coverage = 0.0;
        self.previous_coverage = 0.0;
    }

    pub fn vertice_count(&self) -> usize {
        self.visited.len()
    }

    pub fn visible_count(&self) -> usize {
        self.visible_count
    }

    /// Percent of vertices seen so far.
    pub fn current_coverage(&self) -> f64 {
        self.current_coverage
    }

    pub fn previous_coverage(&self) -> f64 {
        self.previous_coverage
    }

    pub fn is_visited(&self, i: usize) -> bool {
        self.visited[i]
    }

    pub fn visited(&self) -> &[bool] {
        &self.visited
    }

    /// Mark `newly_seen` and return the coverage gained since the previous call.
    ///
    /// Validates every index before mutating anything.
    pub fn mark_and_diff(&mut self, newly_seen: &[usize]) -> Result<f64, GeometryError> {
        let n = self.visited.len();
        if let Some(&bad) = newly_seen.iter().find(|&&i| i >= n) {
            return Err(GeometryError::IndexOutOfRange { index: bad, count: n });
        }
        for &i in newly_seen {
            if !self.visited[i] {
                self.visited[i] = true;
                self.visible_count += 1;
            }
        }
        self.current_coverage = 100.0 * self.visible_count as f64 / n as f64;
        let diff = self.current_coverage - self.previous_coverage;
        self.previous_coverage = self.current_coverage;
        Ok(diff)
    }

    /// Blue for visited, red otherwise.
    pub fn colors(&self) -> Vec<Rgb> {
        self.visited
            .iter()
            .map(|&v| if v { VISITED_COLOR } else { UNVISITED_COLOR })
            .collect()
    }
}
