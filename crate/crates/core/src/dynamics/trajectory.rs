use alloc::vec::Vec;
use core::fmt;

use nalgebra::DVector;

use super::system::LcaState;

/// Integration backend that produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Backend {
    FixedStep,
    Switched,
}

impl Backend {
    pub fn tag(self) -> &'static str {
        match self {
            Backend::FixedStep => "fixed-step",
            Backend::Switched => "switched",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SwitchDirection {
    Activate,
    Deactivate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeSwitch {
    pub node: usize,
    pub direction: SwitchDirection,
}

/// Every node whose active status changed at time `t`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SwitchEvent {
    pub t: f64,
    pub changes: Vec<NodeSwitch>,
}

/// Interval of constant active set and sign pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub active_set: Vec<usize>,
    pub signs: Vec<i8>,
    /// Internal state at `t_start`.
    pub u_start: DVector<f64>,
    /// Threshold at `t_start`.
    pub lambda_start: f64,
    /// No active node changed sign inside the segment.
    pub sign_stable: bool,
}

/// Result of a simulation run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub backend: Backend,
    pub tau: f64,
    pub initial_state: LcaState,
    /// States at the requested output times, in increasing time order.
    pub samples: Vec<LcaState>,
    pub switch_events: Vec<SwitchEvent>,
    pub segments: Vec<Segment>,
    pub final_state: LcaState,
    /// Whether the run met the stationarity test before `t_max`.
    pub converged: bool,
    /// Largest active set seen at any step or segment.
    pub max_active: usize,
    /// Count of active nodes that changed sign without first deactivating.
    pub sign_violations: usize,
    /// Largest jump in `u` across a located switch (switched backend).
    pub max_continuity_gap: f64,
}

impl Trajectory {
    /// Distinct active sets in order of first visit.
    pub fn visited_active_sets(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for seg in &self.segments {
            if !out.iter().any(|s| *s == seg.active_set) {
                out.push(seg.active_set.clone());
            }
        }
        out
    }

    /// Distinct (active set, signs) pairs in order of first visit.
    pub fn visited_patterns(&self) -> Vec<(Vec<usize>, Vec<i8>)> {
        let mut out: Vec<(Vec<usize>, Vec<i8>)> = Vec::new();
        for seg in &self.segments {
            if !out.iter().any(|(s, z)| *s == seg.active_set && *z == seg.signs) {
                out.push((seg.active_set.clone(), seg.signs.clone()));
            }
        }
        out
    }

    pub fn switch_count(&self) -> usize {
        self.switch_events.iter().map(|e| e.changes.len()).sum()
    }

    pub fn sample_times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn all_segments_sign_stable(&self) -> bool {
        self.sign_violations == 0 && self.segments.iter().all(|s| s.sign_stable)
    }
}

/// Signed activity of one node: `+1` above `lambda`, `-1` below `-lambda`.
#[inline]
pub(crate) fn node_status(u: f64, lambda: f64) -> i8 {
    if u > lambda {
        1
    } else if u < -lambda {
        -1
    } else {
        0
    }
}

pub(crate) fn status_vector(u: &DVector<f64>, lambda: f64, out: &mut Vec<i8>) {
    out.clear();
    out.extend(u.iter().map(|&x| node_status(x, lambda)));
}

/// Changes between two status vectors, plus the number of direct sign flips.
pub(crate) fn diff_status(old: &[i8], new: &[i8]) -> (Vec<NodeSwitch>, usize) {
    let mut changes = Vec::new();
    let mut flips = 0;
    for (k, (&o, &n)) in old.iter().zip(new).enumerate() {
        if o == n {
            continue;
        }
        if o != 0 && n != 0 {
            flips += 1;
        }
        let direction = if n == 0 { SwitchDirection::Deactivate } else { SwitchDirection::Activate };
        changes.push(NodeSwitch { node: k, direction });
    }
    (changes, flips)
}

pub(crate) fn pattern_of(status: &[i8]) -> (Vec<usize>, Vec<i8>) {
    status.iter().enumerate().filter(|(_, s)| **s != 0).map(|(k, s)| (k, *s)).unzip()
}
