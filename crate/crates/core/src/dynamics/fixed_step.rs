use alloc::vec::Vec;

use nalgebra::DVector;

use super::system::{LcaOperator, LcaState};
use super::threshold::ThresholdSchedule;
use super::trajectory::{diff_status, pattern_of, status_vector, Backend, Segment, SwitchEvent, Trajectory};
use crate::ensemble::ProblemInstance;
use crate::linalg::norm_inf;
use crate::{Error, Result};

/// Times at which a trajectory records its state.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputTimes {
    /// Every integration step, including `t = 0` and `t_max`.
    EveryStep,
    /// `0, h, 2h, ...` up to `t_max`.
    Uniform(f64),
    /// Strictly increasing times inside `[0, t_max]`.
    Explicit(Vec<f64>),
}

impl OutputTimes {
    pub fn resolve(&self, t_max: f64, dt: f64) -> Result<Vec<f64>> {
        match self {
            OutputTimes::EveryStep => {
                let steps = step_count(t_max, dt);
                Ok((0..=steps).map(|k| grid_time(k, steps, dt, t_max)).collect())
            }
            OutputTimes::Uniform(h) => {
                if !(*h > 0.0 && h.is_finite()) {
                    return Err(Error::invalid("output spacing must be positive"));
                }
                let count = libm::floor(t_max / h + 1e-9) as usize;
                Ok((0..=count).map(|k| (k as f64 * h).min(t_max)).collect())
            }
            OutputTimes::Explicit(times) => {
                if times.iter().any(|t| !(*t >= 0.0 && *t <= t_max * (1.0 + 1e-12))) {
                    return Err(Error::invalid("output times must lie in [0, t_max]"));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::invalid("output times must be strictly increasing"));
                }
                Ok(times.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedStepOptions {
    /// Step size in units of `tau`.
    pub dt: f64,
    /// Horizon in units of `tau`.
    pub t_max: f64,
    pub output_times: OutputTimes,
    /// Stop once the state is stationary; remaining samples repeat it.
    pub stop_on_convergence: bool,
    /// Stationarity test: `tau ||du/dt||_inf <= tol (1 + ||Phi^T y||_inf)`.
    pub convergence_tol: f64,
}

impl Default for FixedStepOptions {
    fn default() -> Self {
        FixedStepOptions {
            dt: 0.01,
            t_max: 15.0,
            output_times: OutputTimes::Uniform(0.1),
            stop_on_convergence: true,
            convergence_tol: 1e-9,
        }
    }
}

fn step_count(t_max: f64, dt: f64) -> usize {
    (libm::ceil(t_max / dt - 1e-9) as usize).max(1)
}

fn grid_time(k: usize, steps: usize, dt: f64, t_max: f64) -> f64 {
    if k >= steps {
        t_max
    } else {
        k as f64 * dt
    }
}

struct Rk4<'a> {
    op: LcaOperator<'a>,
    schedule: ThresholdSchedule,
    a: DVector<f64>,
    k2: DVector<f64>,
    k3: DVector<f64>,
    k4: DVector<f64>,
    tmp: DVector<f64>,
}

impl<'a> Rk4<'a> {
    fn rhs(&mut self, u: &DVector<f64>, t: f64, out: &mut DVector<f64>) {
        let lambda = self.schedule.eval(t);
        self.op.scaled_rhs_into(u, lambda, &mut self.a, out);
    }

    /// One classical step of size `h` from `(u, t)`, given `k1` at that point.
    fn step(&mut self, u: &DVector<f64>, t: f64, h: f64, k1: &DVector<f64>, out: &mut DVector<f64>) {
        let mid = t + 0.5 * h;
        self.tmp.copy_from(u);
        self.tmp.axpy(0.5 * h, k1, 1.0);
        let (mut k2, mut k3, mut k4, mut tmp) = (
            core::mem::take(&mut self.k2),
            core::mem::take(&mut self.k3),
            core::mem::take(&mut self.k4),
            core::mem::take(&mut self.tmp),
        );
        self.rhs(&tmp, mid, &mut k2);
        tmp.copy_from(u);
        tmp.axpy(0.5 * h, &k2, 1.0);
        self.rhs(&tmp, mid, &mut k3);
        tmp.copy_from(u);
        tmp.axpy(h, &k3, 1.0);
        self.rhs(&tmp, t + h, &mut k4);
        out.copy_from(u);
        out.axpy(h / 6.0, k1, 1.0);
        out.axpy(h / 3.0, &k2, 1.0);
        out.axpy(h / 3.0, &k3, 1.0);
        out.axpy(h / 6.0, &k4, 1.0);
        self.k2 = k2;
        self.k3 = k3;
        self.k4 = k4;
        self.tmp = tmp;
    }
}

/// Classical RK4 integration of the LCA equations on the grid `t = k dt`.
///
/// The threshold is evaluated at every stage time, so decaying schedules are
/// supported. Active-set changes are detected between consecutive grid points
/// and recorded at the later one. Output times that fall between grid points
/// are reached by a separate partial step that leaves the main grid untouched.
pub fn simulate_fixed_step(
    instance: &ProblemInstance,
    u0: Option<&DVector<f64>>,
    opts: &FixedStepOptions,
) -> Result<Trajectory> {
    let n = instance.n();
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::invalid("dt must be positive"));
    }
    if !(opts.t_max >= opts.dt && opts.t_max.is_finite()) {
        return Err(Error::invalid("t_max must be at least dt"));
    }
    let schedule = *instance.threshold();
    schedule.validate()?;
    let mut u = match u0 {
        Some(v) if v.len() != n => {
            return Err(Error::invalid(alloc::format!("initial state has length {}, expected {n}", v.len())))
        }
        Some(v) if v.iter().any(|x| !x.is_finite()) => return Err(Error::invalid("initial state is not finite")),
        Some(v) => v.clone(),
        None => DVector::zeros(n),
    };
    let outputs = opts.output_times.resolve(opts.t_max, opts.dt)?;
    let steps = step_count(opts.t_max, opts.dt);

    let op = LcaOperator::new(instance);
    let threshold_tol = opts.convergence_tol * (1.0 + norm_inf(op.phi_t_y()));
    let tau = op.tau();
    let mut rk = Rk4 {
        op,
        schedule,
        a: DVector::zeros(n),
        k2: DVector::zeros(n),
        k3: DVector::zeros(n),
        k4: DVector::zeros(n),
        tmp: DVector::zeros(n),
    };
    let mut k1 = DVector::zeros(n);
    let mut next = DVector::zeros(n);
    let mut partial = DVector::zeros(n);

    let initial_state = LcaState::from_internal(0.0, u.clone(), schedule.eval(0.0));
    let mut status = Vec::with_capacity(n);
    let mut new_status = Vec::with_capacity(n);
    status_vector(&u, schedule.eval(0.0), &mut status);
    let (set0, signs0) = pattern_of(&status);
    let mut max_active = set0.len();
    let mut segments = alloc::vec![Segment {
        t_start: 0.0,
        t_end: 0.0,
        active_set: set0,
        signs: signs0,
        u_start: u.clone(),
        lambda_start: schedule.eval(0.0),
        sign_stable: true,
    }];
    let mut events: Vec<SwitchEvent> = Vec::new();
    let mut sign_violations = 0;
    let mut samples = Vec::with_capacity(outputs.len());
    let mut out_idx = 0;
    let eps = 1e-9 * opts.dt;

    let mut t = 0.0;
    rk.rhs(&u, t, &mut k1);
    let mut converged = false;
    for k in 0..steps {
        let t_next = grid_time(k + 1, steps, opts.dt, opts.t_max);
        while out_idx < outputs.len() && outputs[out_idx] < t_next - eps {
            let to = outputs[out_idx];
            if to - t <= eps {
                samples.push(LcaState::from_internal(to, u.clone(), schedule.eval(to)));
            } else {
                rk.step(&u, t, to - t, &k1, &mut partial);
                samples.push(LcaState::from_internal(to, partial.clone(), schedule.eval(to)));
            }
            out_idx += 1;
        }
        if opts.stop_on_convergence && is_stationary(&k1, &schedule, t, threshold_tol, opts.convergence_tol) {
            converged = true;
            break;
        }
        rk.step(&u, t, t_next - t, &k1, &mut next);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericFailure { time: t_next, reason: "state became non-finite".into() });
        }
        core::mem::swap(&mut u, &mut next);
        t = t_next;
        rk.rhs(&u, t, &mut k1);

        let lambda = schedule.eval(t);
        status_vector(&u, lambda, &mut new_status);
        if new_status != status {
            let (changes, flips) = diff_status(&status, &new_status);
            let last = segments.last_mut().expect("segment list is never empty");
            last.t_end = t;
            if flips > 0 {
                last.sign_stable = false;
                sign_violations += flips;
            }
            let (set, signs) = pattern_of(&new_status);
            max_active = max_active.max(set.len());
            segments.push(Segment {
                t_start: t,
                t_end: t,
                active_set: set,
                signs,
                u_start: u.clone(),
                lambda_start: lambda,
                sign_stable: true,
            });
            events.push(SwitchEvent { t, changes });
            core::mem::swap(&mut status, &mut new_status);
        }
    }
    if !converged && opts.stop_on_convergence {
        converged = is_stationary(&k1, &schedule, t, threshold_tol, opts.convergence_tol);
    }
    segments.last_mut().expect("segment list is never empty").t_end = t;
    // Remaining requested times: at t_max, or after an early stop.
    for &to in &outputs[out_idx..] {
        samples.push(LcaState::from_internal(to, u.clone(), schedule.eval(to)));
    }
    let final_state = LcaState::from_internal(t, u, schedule.eval(t));
    Ok(Trajectory {
        backend: Backend::FixedStep,
        tau,
        initial_state,
        samples,
        switch_events: events,
        segments,
        final_state,
        converged,
        max_active,
        sign_violations,
        max_continuity_gap: 0.0,
    })
}

fn is_stationary(k1: &DVector<f64>, schedule: &ThresholdSchedule, t: f64, tol: f64, rel: f64) -> bool {
    let floor = schedule.floor();
    norm_inf(k1) <= tol && schedule.eval(t) - floor <= rel * floor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{measure, trial_rng, MeasurementMatrix, SparseSignal};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn scalar(y: f64, lambda: f64) -> ProblemInstance {
        let phi = MeasurementMatrix::explicit(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let sig = SparseSignal::from_values(DVector::from_element(1, y));
        measure(phi, sig, 0.0, ThresholdSchedule::constant(lambda).unwrap(), &mut trial_rng(0, 0)).unwrap()
    }

    #[test]
    fn subthreshold_scalar_follows_relaxation() {
        let inst = scalar(0.5, 1.0);
        let opts = FixedStepOptions { t_max: 5.0, stop_on_convergence: false, ..Default::default() };
        let traj = simulate_fixed_step(&inst, None, &opts).unwrap();
        for s in &traj.samples {
            assert_abs_diff_eq!(s.u[0], 0.5 * (1.0 - (-s.t).exp()), epsilon = 1e-10);
            assert_eq!(s.a[0], 0.0);
        }
        assert!(traj.switch_events.is_empty());
        assert_eq!(traj.final_state.a[0], 0.0);
    }

    #[test]
    fn scalar_reaches_shrunk_value() {
        let inst = scalar(2.0, 1.0);
        let traj = simulate_fixed_step(&inst, None, &FixedStepOptions { t_max: 40.0, ..Default::default() }).unwrap();
        assert!(traj.converged);
        assert_abs_diff_eq!(traj.final_state.a[0], 1.0, epsilon = 1e-8);
        assert_eq!(traj.switch_events.len(), 1);
        // crossing at ln 2, recorded at the next grid point
        let t = traj.switch_events[0].t;
        assert!(t >= core::f64::consts::LN_2 && t < core::f64::consts::LN_2 + 0.01 + 1e-12);
    }

    #[test]
    fn off_grid_outputs_do_not_perturb_the_grid() {
        let inst = scalar(2.0, 1.0);
        let base = FixedStepOptions { t_max: 3.0, stop_on_convergence: false, ..Default::default() };
        let a = simulate_fixed_step(&inst, None, &base).unwrap();
        let b = simulate_fixed_step(
            &inst,
            None,
            &FixedStepOptions { output_times: OutputTimes::Explicit(vec![0.123, 1.5551, 3.0]), ..base.clone() },
        )
        .unwrap();
        assert_eq!(a.final_state.u, b.final_state.u);
        assert_eq!(b.samples.len(), 3);
        assert!((b.samples[0].t - 0.123).abs() < 1e-15);
    }

    #[test]
    fn time_constant_scales_time() {
        let slow = scalar(0.5, 1.0).with_tau(2.0).unwrap();
        let opts = FixedStepOptions { t_max: 3.0, stop_on_convergence: false, ..Default::default() };
        let traj = simulate_fixed_step(&slow, None, &opts).unwrap();
        // times are in units of tau, so the curve is unchanged
        assert_abs_diff_eq!(traj.final_state.u[0], 0.5 * (1.0 - (-3.0f64).exp()), epsilon = 1e-10);
        assert_eq!(traj.tau, 2.0);
    }

    #[test]
    fn rejects_bad_options() {
        let inst = scalar(1.0, 0.5);
        let bad = FixedStepOptions { dt: 0.0, ..Default::default() };
        assert!(simulate_fixed_step(&inst, None, &bad).is_err());
        let short = FixedStepOptions { dt: 0.1, t_max: 0.05, ..Default::default() };
        assert!(simulate_fixed_step(&inst, None, &short).is_err());
        let u0 = DVector::zeros(3);
        assert!(simulate_fixed_step(&inst, Some(&u0), &FixedStepOptions::default()).is_err());
    }
}
