use crate::dynamics::Trajectory;
use crate::linalg::is_subset;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActiveSetStats {
    /// Largest active set over the whole run.
    pub q_obs: usize,
    /// Every visited active set lies inside the optimal support.
    pub contained: bool,
    /// `q_obs / S` (zero when both vanish).
    pub ratio: f64,
}

pub fn active_set_stats(trajectory: &Trajectory, optimal_support: &[usize]) -> ActiveSetStats {
    let from_samples = trajectory.samples.iter().map(|s| s.active_count()).max().unwrap_or(0);
    let q_obs = trajectory.max_active.max(from_samples).max(trajectory.final_state.active_count());
    let contained = trajectory.segments.iter().all(|s| is_subset(&s.active_set, optimal_support))
        && trajectory.samples.iter().all(|s| is_subset(&s.active_set, optimal_support))
        && is_subset(&trajectory.final_state.active_set, optimal_support);
    let s = optimal_support.len();
    let ratio = match (q_obs, s) {
        (0, _) => 0.0,
        (_, 0) => f64::INFINITY,
        (q, s) => q as f64 / s as f64,
    };
    ActiveSetStats { q_obs, contained, ratio }
}
