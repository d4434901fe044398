use nalgebra::DVector;

use super::bounds::c_delta;
use crate::dynamics::{steady_state_candidate, Trajectory};
use crate::ensemble::ProblemInstance;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Lemma1Report {
    pub bound: f64,
    pub actual: f64,
    pub holds: bool,
}

/// Distance from the segment equilibrium to the true signal:
/// `||a_inf - a_dag|| <= (||a_dag|| + sqrt(1 - delta) ||eps|| + lambda sqrt(p)) / (1 - delta)`
/// with `p = |active_set|` and `delta` of order `|active_set U supp(a_dag)|`.
pub fn check_lemma1(instance: &ProblemInstance, active_set: &[usize], signs: &[f64], delta: f64) -> Result<Lemma1Report> {
    check_lemma1_with_p(instance, active_set, signs, delta, active_set.len())
}

pub fn check_lemma1_with_p(
    instance: &ProblemInstance,
    active_set: &[usize],
    signs: &[f64],
    delta: f64,
    p: usize,
) -> Result<Lemma1Report> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::invalid("RIP constant must lie in [0, 1)"));
    }
    if active_set.len() > p {
        return Err(Error::invalid("active set is larger than p"));
    }
    let lambda = instance.threshold().constant_value().ok_or_else(|| Error::invalid("lemma needs a constant threshold"))?;
    let a_inf = steady_state_candidate(instance.phi(), active_set, signs, instance.y(), lambda)?;
    let actual = (a_inf - instance.signal().values()).norm();
    let bound = (instance.signal().norm() + libm::sqrt(1.0 - delta) * instance.noise().norm() + lambda * libm::sqrt(p as f64))
        / (1.0 - delta);
    Ok(Lemma1Report { bound, actual, holds: actual <= bound })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Lemma2Report {
    /// No checked sample exceeded the bound.
    pub holds: bool,
    pub bound: f64,
    /// Segments whose start met `||a(t_k) - a_dag|| <= C_delta(p)`.
    pub segments_checked: usize,
    /// Segments skipped because that precondition was not met.
    pub precondition_not_met: usize,
    pub samples_checked: usize,
    /// Largest `||a(t) - a_dag|| / C_delta(p)` over checked samples.
    pub max_ratio: f64,
}

/// Along every segment whose start satisfies `||a(t_k) - a_dag|| <= C_delta(p)`,
/// checks `||a(t) - a_dag|| <= C_delta(p) (1 + 1e-9)` at the segment start and
/// at every trajectory sample inside it.
pub fn check_lemma2(trajectory: &Trajectory, instance: &ProblemInstance, p: usize, delta: f64) -> Result<Lemma2Report> {
    let lambda = instance.threshold().constant_value().ok_or_else(|| Error::invalid("lemma needs a constant threshold"))?;
    let a_dag = instance.signal().values();
    let bound = c_delta(p, delta, instance.signal().norm(), instance.noise().norm(), lambda)?;
    let limit = bound * (1.0 + 1e-9);
    let mut report = Lemma2Report {
        holds: true,
        bound,
        segments_checked: 0,
        precondition_not_met: 0,
        samples_checked: 0,
        max_ratio: 0.0,
    };
    let dist = |u: &DVector<f64>| (u.map(|x| crate::dynamics::soft_threshold_scalar(x, lambda)) - a_dag).norm();
    let mut cursor = 0;
    let samples = &trajectory.samples;
    let count = trajectory.segments.len();
    for (idx, seg) in trajectory.segments.iter().enumerate() {
        let last = idx + 1 == count;
        let start = dist(&seg.u_start);
        let in_segment = |t: f64| t >= seg.t_start && (t < seg.t_end || last);
        while cursor < samples.len() && samples[cursor].t < seg.t_start {
            cursor += 1;
        }
        if start > bound {
            report.precondition_not_met += 1;
            continue;
        }
        report.segments_checked += 1;
        report.samples_checked += 1;
        report.max_ratio = report.max_ratio.max(start / bound);
        let mut j = cursor;
        while j < samples.len() && in_segment(samples[j].t) {
            let d = (&samples[j].a - a_dag).norm();
            report.samples_checked += 1;
            report.max_ratio = report.max_ratio.max(d / bound);
            if d > limit {
                report.holds = false;
            }
            j += 1;
        }
    }
    Ok(report)
}
