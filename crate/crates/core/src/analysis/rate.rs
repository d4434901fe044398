use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::Trajectory;
use crate::linalg::{self, union_sorted};
use crate::{Error, Result};

/// Errors below this are treated as numerically zero.
pub const ZERO_ERROR: f64 = 1e-12;
/// The fit ignores samples whose error has dropped below this.
pub const FIT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateReport {
    pub d_constant: Option<f64>,
    /// `(1 - d) / tau`, only when `d < 1`.
    pub theoretical_rate: Option<f64>,
    /// Decay rate (per unit of physical time) from a log-linear fit.
    pub fitted_rate: Option<f64>,
    /// Time interval (units of `tau`) of the samples used by the fit.
    pub window: Option<(f64, f64)>,
}

impl RateReport {
    pub fn with_d(d: f64, tau: f64) -> Self {
        RateReport {
            d_constant: Some(d),
            theoretical_rate: (d < 1.0).then(|| (1.0 - d) / tau),
            ..Default::default()
        }
    }
}

/// `max` over visited sets `G` of the isometry deviation of `Phi` restricted
/// to `G U G_final`.
pub fn d_constant(phi: &DMatrix<f64>, visited: &[Vec<usize>], final_set: &[usize]) -> Result<f64> {
    if visited.is_empty() {
        return Err(Error::invalid("no visited active sets"));
    }
    let mut d = 0.0f64;
    for set in visited {
        let joint = union_sorted(set, final_set);
        if joint.iter().any(|&k| k >= phi.ncols()) {
            return Err(Error::invalid("active set index out of range"));
        }
        let sub = linalg::select_columns(phi, &joint);
        d = d.max(linalg::isometry_deviation(&sub.tr_mul(&sub)));
    }
    Ok(d)
}

/// Least-squares decay rate of `errors(t)` over samples with error in
/// `[1e-9, 0.5 errors[0]]`. Times are in units of `tau`; the result is per
/// unit of physical time.
pub fn fit_rate_series(times: &[f64], errors: &[f64], tau: f64) -> Result<(f64, (f64, f64))> {
    if times.len() != errors.len() {
        return Err(Error::invalid("times and errors differ in length"));
    }
    if errors.iter().filter(|e| **e > ZERO_ERROR).count() < 10 {
        return Err(Error::InsufficientData("fewer than 10 samples with non-zero error".into()));
    }
    let ceiling = 0.5 * errors[0];
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(errors)
        .filter(|(_, e)| **e >= FIT_FLOOR && **e <= ceiling)
        .map(|(t, e)| (*t, libm::log(*e)))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData("fewer than 3 samples inside the fit window".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("fit window has zero width".into()));
    }
    let window = (pts[0].0, pts[pts.len() - 1].0);
    Ok((-(sxy / sxx) / tau, window))
}

/// `||u(t) - u_star||` at each trajectory sample.
pub fn error_series(trajectory: &Trajectory, u_star: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    trajectory.samples.iter().map(|s| (s.t, (&s.u - u_star).norm())).unzip()
}

/// Fitted decay rate of `||u(t) - u_star||` along the trajectory samples.
pub fn fit_rate(trajectory: &Trajectory, u_star: &DVector<f64>) -> Result<RateReport> {
    let (times, errors) = error_series(trajectory, u_star);
    let (rate, window) = fit_rate_series(&times, &errors, trajectory.tau)?;
    Ok(RateReport { fitted_rate: Some(rate), window: Some(window), ..Default::default() })
}

/// First time the error falls to `fraction` of its initial value, linearly
/// interpolated between samples.
pub fn time_to_fraction(times: &[f64], errors: &[f64], fraction: f64) -> Option<f64> {
    let target = fraction * *errors.first()?;
    if errors[0] <= target {
        return Some(times[0]);
    }
    for i in 1..errors.len() {
        if errors[i] <= target {
            let (e0, e1) = (errors[i - 1], errors[i]);
            let w = if e0 == e1 { 1.0 } else { (e0 - target) / (e0 - e1) };
            return Some(times[i - 1] + w * (times[i] - times[i - 1]));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn synthetic_exponential() {
        let times: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let errors: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp()).collect();
        let (rate, (lo, hi)) = fit_rate_series(&times, &errors, 1.0).unwrap();
        assert_abs_diff_eq!(rate, 2.0, epsilon = 1e-6);
        assert!(lo > 0.3 && hi < 10.0);
        let (slow, _) = fit_rate_series(&times, &errors, 4.0).unwrap();
        assert_abs_diff_eq!(slow, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn too_few_samples() {
        let times = [0.0, 1.0, 2.0];
        let errors = [1.0, 0.3, 0.1];
        assert!(matches!(fit_rate_series(&times, &errors, 1.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn orthonormal_d_is_zero() {
        let phi = DMatrix::identity(5, 5);
        assert_eq!(d_constant(&phi, &[vec![0, 2], vec![1]], &[2, 4]).unwrap(), 0.0);
        assert!(d_constant(&phi, &[], &[0]).is_err());
    }

    #[test]
    fn fraction_time() {
        let times = [0.0, 1.0, 2.0];
        let errors = [1.0, 0.5, 0.0];
        assert_abs_diff_eq!(time_to_fraction(&times, &errors, 0.25).unwrap(), 1.5, epsilon = 1e-15);
        assert_eq!(time_to_fraction(&times, &[1.0, 0.9, 0.8], 0.01), None);
    }

    #[test]
    fn report_rate_from_d() {
        let r = RateReport::with_d(0.25, 2.0);
        assert_eq!(r.theoretical_rate, Some(0.375));
        assert_eq!(RateReport::with_d(1.2, 1.0).theoretical_rate, None);
    }
}
