use nalgebra::DVector;

use crate::{Error, Result};

/// Soft threshold of one value; `lambda` is assumed positive.
#[inline]
pub fn soft_threshold_scalar(u: f64, lambda: f64) -> f64 {
    if u > lambda {
        u - lambda
    } else if u < -lambda {
        u + lambda
    } else {
        0.0
    }
}

/// Entrywise soft threshold: zero on `[-lambda, lambda]`, shifted toward zero
/// by `lambda` outside.
pub fn soft_threshold(u: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_lambda(lambda)?;
    Ok(u.map(|x| soft_threshold_scalar(x, lambda)))
}

pub(crate) fn soft_threshold_into(u: &DVector<f64>, lambda: f64, out: &mut DVector<f64>) {
    for (o, &x) in out.iter_mut().zip(u.iter()) {
        *o = soft_threshold_scalar(x, lambda);
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(alloc::format!("threshold must be positive, got {lambda}")))
    }
}

/// Threshold as a function of time (in units of `tau`).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum ThresholdSchedule {
    Constant {
        lambda: f64,
    },
    /// `lambda_end + (lambda0 - lambda_end) * exp(-rate * t)`.
    ExponentialDecay {
        lambda0: f64,
        lambda_end: f64,
        rate: f64,
    },
}

impl ThresholdSchedule {
    pub fn constant(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(ThresholdSchedule::Constant { lambda })
    }

    pub fn exponential_decay(lambda0: f64, lambda_end: f64, rate: f64) -> Result<Self> {
        check_lambda(lambda_end)?;
        if !(lambda_end <= lambda0 && lambda0.is_finite()) {
            return Err(Error::invalid("decay schedule needs 0 < lambda_end <= lambda0"));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid("decay rate must be positive"));
        }
        Ok(ThresholdSchedule::ExponentialDecay { lambda0, lambda_end, rate })
    }

    /// Re-checks the parameters, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdSchedule::Constant { lambda } => Self::constant(lambda).map(|_| ()),
            ThresholdSchedule::ExponentialDecay { lambda0, lambda_end, rate } => {
                Self::exponential_decay(lambda0, lambda_end, rate).map(|_| ())
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            ThresholdSchedule::Constant { lambda } => lambda,
            ThresholdSchedule::ExponentialDecay { lambda0, lambda_end, rate } => {
                lambda_end + (lambda0 - lambda_end) * libm::exp(-rate * t.max(0.0))
            }
        }
    }

    pub fn initial(&self) -> f64 {
        self.eval(0.0)
    }

    /// Limit as `t -> infinity`.
    pub fn floor(&self) -> f64 {
        match *self {
            ThresholdSchedule::Constant { lambda } => lambda,
            ThresholdSchedule::ExponentialDecay { lambda_end, .. } => lambda_end,
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            ThresholdSchedule::Constant { lambda } => Some(lambda),
            ThresholdSchedule::ExponentialDecay { .. } => None,
        }
    }
}

/// Threshold in effect at time `t` (units of `tau`).
pub fn eval_threshold(schedule: &ThresholdSchedule, t: f64) -> f64 {
    schedule.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn scalar_cases() {
        let st = |u: f64, l: f64| soft_threshold(&DVector::from_element(1, u), l).unwrap()[0];
        assert_eq!(st(0.5, 1.0), 0.0);
        assert_eq!(st(2.0, 1.0), 1.0);
        assert_abs_diff_eq!(st(-1.5, 0.3), -1.2, epsilon = 1e-15);
        assert_eq!(st(1.0, 1.0), 0.0);
    }

    #[test]
    fn non_positive_threshold_is_rejected() {
        let u = DVector::from_element(2, 1.0);
        assert!(soft_threshold(&u, 0.0).is_err());
        assert!(soft_threshold(&u, -0.1).is_err());
    }

    #[test]
    fn schedules() {
        let c = ThresholdSchedule::constant(0.1).unwrap();
        assert_eq!(eval_threshold(&c, 0.0), 0.1);
        assert_eq!(eval_threshold(&c, 123.0), 0.1);

        let d = ThresholdSchedule::exponential_decay(0.3, 0.08, 1.0).unwrap();
        assert_eq!(d.eval(0.0), 0.3);
        assert_abs_diff_eq!(d.eval(1e3), 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(d.eval(1.0), 0.08 + 0.22 * (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(d.floor(), 0.08);
    }

    #[test]
    fn bad_schedules_are_rejected() {
        assert!(ThresholdSchedule::exponential_decay(0.1, 0.2, 1.0).is_err());
        assert!(ThresholdSchedule::exponential_decay(0.3, 0.0, 1.0).is_err());
        assert!(ThresholdSchedule::exponential_decay(0.3, 0.1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn decay_is_monotone_and_bounded(l0 in 0.01f64..2.0, frac in 0.01f64..1.0, rate in 0.01f64..10.0,
                                        t1 in 0.0f64..50.0, dt in 0.0f64..50.0) {
            let s = ThresholdSchedule::exponential_decay(l0, l0 * frac, rate).unwrap();
            prop_assert!(s.eval(t1 + dt) <= s.eval(t1));
            prop_assert!(s.eval(t1 + dt) >= l0 * frac);
        }
    }
}
