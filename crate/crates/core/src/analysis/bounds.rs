use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::invalid(alloc::format!("RIP constant must lie in [0, 1), got {delta}")))
    }
}

/// `(1 + delta) / (1 - delta)^2`.
pub fn alpha(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok((1.0 + delta) / ((1.0 - delta) * (1.0 - delta)))
}

/// `alpha(delta) (||a|| + sqrt(1 - delta) ||eps|| + lambda sqrt(p))`.
pub fn c_delta(p: usize, delta: f64, norm_a: f64, norm_eps: f64, lambda: f64) -> Result<f64> {
    let a = alpha(delta)?;
    Ok(a * (norm_a + libm::sqrt(1.0 - delta) * norm_eps + lambda * libm::sqrt(p as f64)))
}

/// Largest RIP constant for which the optimal-support condition holds with
/// `lambda = r / sqrt(s)` and equal-magnitude unit-norm signals.
pub fn delta_bound_thm2(r: f64, s: usize, alpha: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("r must lie in (0, 1)"));
    }
    if s == 0 || !(alpha > 0.0) {
        return Err(Error::invalid("s and alpha must be positive"));
    }
    Ok(r / ((1.0 + r) * alpha * libm::sqrt(s as f64)))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeltaBound {
    pub value: f64,
    pub admissible: bool,
    pub diagnostic: Option<String>,
}

/// Largest RIP constant for which the bounded-active-set condition holds
/// with `q = beta s` and `lambda = r / sqrt(s)`: `(r sqrt(beta) - 1) / (3 r sqrt(beta) + 1)`.
pub fn delta_bound_thm3(r: f64, beta: f64) -> DeltaBound {
    let x = r * libm::sqrt(beta);
    if !(x > 1.0) {
        return DeltaBound {
            value: 0.0,
            admissible: false,
            diagnostic: Some(alloc::format!("r sqrt(beta) = {x} <= 1 leaves no admissible constant")),
        };
    }
    DeltaBound { value: (x - 1.0) / (3.0 * x + 1.0), admissible: true, diagnostic: None }
}

/// `exp(-(1 - delta) t / tau)` at each time.
pub fn theoretical_decay(delta: f64, tau: f64, times: &[f64]) -> Result<Vec<f64>> {
    if !(delta < 1.0) {
        return Err(Error::invalid("decay curve needs delta < 1"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    Ok(times.iter().map(|t| libm::exp(-(1.0 - delta) * t / tau)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn alpha_values() {
        assert_eq!(alpha(0.0).unwrap(), 1.0);
        assert_eq!(alpha(0.5).unwrap(), 6.0);
        assert_abs_diff_eq!(alpha(0.1).unwrap(), 1.3580, epsilon = 5e-5);
        assert!(alpha(1.0).is_err());
        assert!(alpha(-0.1).is_err());
    }

    #[test]
    fn c_delta_values() {
        assert_eq!(c_delta(7, 0.0, 0.8, 0.0, 0.0).unwrap(), 0.8);
        assert_abs_diff_eq!(c_delta(4, 0.0, 1.0, 0.0, 0.1).unwrap(), 1.2, epsilon = 1e-15);
        assert_abs_diff_eq!(c_delta(5, 0.1, 1.0, 0.0, 0.1).unwrap(), 1.6617, epsilon = 5e-5);
    }

    #[test]
    fn thm2_bound() {
        assert_abs_diff_eq!(delta_bound_thm2(0.5, 1, 1.0).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(delta_bound_thm2(0.8, 25, 1.358).unwrap(), 0.0654, epsilon = 1e-4);
        let a = delta_bound_thm2(0.6, 4, 1.2).unwrap();
        let b = delta_bound_thm2(0.6, 16, 1.2).unwrap();
        assert_abs_diff_eq!(a / b, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn thm3_bound() {
        let b = delta_bound_thm3(0.8, 30.0);
        assert!(b.admissible);
        assert_abs_diff_eq!(b.value, 0.2391, epsilon = 5e-5);
        assert!(b.value <= 0.24);
        let edge = delta_bound_thm3(0.5, 4.0);
        assert_eq!(edge.value, 0.0);
        assert!(!edge.admissible);
        assert_abs_diff_eq!(delta_bound_thm3(0.9, 1e16).value, 1.0 / 3.0, epsilon = 1e-7);
    }

    #[test]
    fn decay_curve() {
        let c = theoretical_decay(0.331, 1.0, &[0.0, 5.0]).unwrap();
        assert_eq!(c[0], 1.0);
        assert_abs_diff_eq!(c[1], (-3.345f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], 0.0353, epsilon = 5e-5);
        assert_abs_diff_eq!(theoretical_decay(0.0, 1.0, &[1.0]).unwrap()[0], (-1.0f64).exp(), epsilon = 1e-16);
    }
}
