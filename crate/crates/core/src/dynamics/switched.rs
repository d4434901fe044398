use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::fixed_step::OutputTimes;
use super::linear::relaxation_factor;
use super::system::{LcaOperator, LcaState};
use super::trajectory::{diff_status, pattern_of, status_vector, Backend, Segment, SwitchEvent, Trajectory};
use crate::ensemble::ProblemInstance;
use crate::linalg::{self, norm_inf, SINGULAR_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedOptions {
    /// Horizon in units of `tau`.
    pub t_max: f64,
    /// Width of the final bisection bracket around a switch, in units of `tau`.
    pub event_tol: f64,
    /// Defaults to `50 N`.
    pub max_switches: Option<usize>,
    pub output_times: OutputTimes,
    /// First scan offset after a segment start.
    pub first_step: f64,
    /// Largest scan spacing, further divided by `max(1, mu_max)`.
    pub max_step: f64,
    /// Stationarity tolerance used for the `converged` flag.
    pub convergence_tol: f64,
}

impl Default for SwitchedOptions {
    fn default() -> Self {
        SwitchedOptions {
            t_max: 15.0,
            event_tol: 1e-12,
            max_switches: None,
            output_times: OutputTimes::Uniform(0.1),
            first_step: 1e-6,
            max_step: 0.05,
            convergence_tol: 1e-9,
        }
    }
}

/// Closed-form solution of the LCA on one segment of fixed active set.
///
/// With `A = Phi_G^T Phi_G = V diag(mu) V^T`, the active outputs evolve as
/// `a_G(s) = V (e^{-mu s} c0 + phi(mu, s) beta)` where `c0 = V^T a_G(0)` and
/// `beta = V^T (Phi_G^T y - lambda z)`. Each inactive node solves a scalar
/// linear ODE driven by `a_G`, whose convolution integral is evaluated per
/// eigen-mode. Time `s` is measured from the segment start in units of `tau`.
#[derive(Debug, Clone)]
pub struct SegmentPropagator {
    lambda: f64,
    active: Vec<usize>,
    signs: Vec<f64>,
    inactive: Vec<usize>,
    mu: DVector<f64>,
    v: DMatrix<f64>,
    c0: DVector<f64>,
    beta: DVector<f64>,
    /// `G[inactive, active] V`.
    coupling: DMatrix<f64>,
    u0_inactive: DVector<f64>,
    drive_inactive: DVector<f64>,
    mu_max: f64,
}

impl SegmentPropagator {
    /// Propagator starting from `u0`; the active set is `{k : |u0_k| > lambda}`.
    pub fn new(gram: &DMatrix<f64>, phi_t_y: &DVector<f64>, u0: &DVector<f64>, lambda: f64, time: f64) -> Result<Self> {
        let n = u0.len();
        if gram.nrows() != n || phi_t_y.len() != n {
            return Err(Error::invalid("Gram matrix, correlation vector and state disagree in size"));
        }
        let mut active = Vec::new();
        let mut signs = Vec::new();
        let mut inactive = Vec::new();
        for (k, &x) in u0.iter().enumerate() {
            if x.abs() > lambda {
                active.push(k);
                signs.push(linalg::sign(x));
            } else {
                inactive.push(k);
            }
        }
        let p = active.len();
        let eig = linalg::symmetric_eigen(linalg::sub_gram(gram, &active), time)?;
        let mu_max = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x));
        let mu = eig.eigenvalues.map(|x| if x <= SINGULAR_TOL * mu_max { 0.0 } else { x });
        let v = eig.eigenvectors;
        let a0 = DVector::from_fn(p, |i, _| u0[active[i]] - lambda * signs[i]);
        let b = DVector::from_fn(p, |i, _| phi_t_y[active[i]] - lambda * signs[i]);
        let c0 = v.tr_mul(&a0);
        let beta = v.tr_mul(&b);
        let g_in = DMatrix::from_fn(inactive.len(), p, |r, c| gram[(inactive[r], active[c])]);
        let coupling = g_in * &v;
        let u0_inactive = DVector::from_fn(inactive.len(), |r, _| u0[inactive[r]]);
        let drive_inactive = DVector::from_fn(inactive.len(), |r, _| phi_t_y[inactive[r]]);
        Ok(SegmentPropagator {
            lambda,
            active,
            signs,
            inactive,
            mu,
            v,
            c0,
            beta,
            coupling,
            u0_inactive,
            drive_inactive,
            mu_max,
        })
    }

    pub fn active_set(&self) -> &[usize] {
        &self.active
    }

    pub fn mu_max(&self) -> f64 {
        self.mu_max
    }

    pub fn n(&self) -> usize {
        self.active.len() + self.inactive.len()
    }

    /// Internal state `s` time units after the segment start.
    pub fn eval(&self, s: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        self.eval_into(s, &mut out);
        out
    }

    pub fn eval_into(&self, s: f64, out: &mut DVector<f64>) {
        let p = self.active.len();
        let decay = libm::exp(-s);
        let rise = -libm::expm1(-s);
        let mut w = DVector::zeros(p);
        let mut integral = DVector::zeros(p);
        for i in 0..p {
            let mu = self.mu[i];
            w[i] = libm::exp(-mu * s) * self.c0[i] + relaxation_factor(mu, s) * self.beta[i];
            let e = mode_convolution(mu, s);
            let j = if mu == 0.0 {
                s - rise
            } else if mu >= 0.1 {
                (rise - e) / mu
            } else {
                (relaxation_factor(mu, s) - rise) / (1.0 - mu)
            };
            integral[i] = self.c0[i] * e + self.beta[i] * j;
        }
        let a = &self.v * w;
        for (i, &k) in self.active.iter().enumerate() {
            out[k] = a[i] + self.lambda * self.signs[i];
        }
        let coupled = &self.coupling * integral;
        for (r, &k) in self.inactive.iter().enumerate() {
            out[k] = decay * self.u0_inactive[r] + rise * self.drive_inactive[r] - coupled[r];
        }
    }

    /// Limit of the segment solution as `s -> infinity`, when `A` is invertible.
    pub fn steady_state(&self) -> Option<DVector<f64>> {
        if self.mu.iter().any(|&m| m == 0.0) {
            return None;
        }
        let c_inf = self.beta.component_div(&self.mu);
        let a = &self.v * &c_inf;
        let coupled = &self.coupling * c_inf;
        let mut out = DVector::zeros(self.n());
        for (i, &k) in self.active.iter().enumerate() {
            out[k] = a[i] + self.lambda * self.signs[i];
        }
        for (r, &k) in self.inactive.iter().enumerate() {
            out[k] = self.drive_inactive[r] - coupled[r];
        }
        Some(out)
    }
}

/// `int_0^s e^{-(s - v)} e^{-mu v} dv`.
fn mode_convolution(mu: f64, s: f64) -> f64 {
    let d = 1.0 - mu;
    if d == 0.0 {
        s * libm::exp(-s)
    } else if d.abs() > 0.5 {
        (libm::exp(-mu * s) - libm::exp(-s)) / d
    } else {
        libm::exp(-s) * libm::expm1(d * s) / d
    }
}

/// Exact propagation of the LCA as a switched affine system.
///
/// Each segment is solved in closed form. The next switch is bracketed by
/// scanning the closed form on a grid that starts at `first_step`, doubles,
/// and is capped at `max_step / max(1, mu_max)`, then bisected down to
/// `event_tol`. The active set is recomputed at the right end of the bracket,
/// so simultaneous crossings become a single multi-node switch.
pub fn simulate_switched(
    instance: &ProblemInstance,
    u0: Option<&DVector<f64>>,
    opts: &SwitchedOptions,
) -> Result<Trajectory> {
    let n = instance.n();
    let lambda = instance.threshold().constant_value().ok_or_else(|| {
        Error::invalid("the switched backend needs a constant threshold; use the fixed-step backend for schedules")
    })?;
    instance.threshold().validate()?;
    if !(opts.t_max > 0.0 && opts.t_max.is_finite()) {
        return Err(Error::invalid("t_max must be positive"));
    }
    if !(opts.event_tol > 0.0) || !(opts.first_step > 0.0) || !(opts.max_step > 0.0) {
        return Err(Error::invalid("event_tol, first_step and max_step must be positive"));
    }
    let mut u = match u0 {
        Some(v) if v.len() != n => {
            return Err(Error::invalid(alloc::format!("initial state has length {}, expected {n}", v.len())))
        }
        Some(v) if v.iter().any(|x| !x.is_finite()) => return Err(Error::invalid("initial state is not finite")),
        Some(v) => v.clone(),
        None => DVector::zeros(n),
    };
    let outputs = opts.output_times.resolve(opts.t_max, opts.t_max)?;
    let max_switches = opts.max_switches.unwrap_or(50 * n);

    let op = LcaOperator::new(instance);
    let gram = match op.gram() {
        Some(g) => g.clone(),
        None => instance.phi().tr_mul(instance.phi()),
    };
    let phi_t_y = op.phi_t_y().clone();

    let initial_state = LcaState::from_internal(0.0, u.clone(), lambda);
    let mut status = Vec::with_capacity(n);
    let mut probe_status = Vec::with_capacity(n);
    status_vector(&u, lambda, &mut status);

    let mut samples = Vec::with_capacity(outputs.len());
    let mut segments = Vec::new();
    let mut events: Vec<SwitchEvent> = Vec::new();
    let mut out_idx = 0;
    let mut switches = 0;
    let mut sign_violations = 0;
    let mut max_active = 0;
    let mut max_gap = 0.0f64;
    let mut probe = DVector::zeros(n);
    let mut t = 0.0;

    loop {
        let prop = SegmentPropagator::new(&gram, &phi_t_y, &u, lambda, t)?;
        max_active = max_active.max(prop.active_set().len());
        let remaining = opts.t_max - t;
        let h_max = opts.max_step / prop.mu_max().max(1.0);

        let mut lo = 0.0;
        let mut step = opts.first_step.min(h_max);
        let mut bracket = None;
        loop {
            let s = (lo + step).min(remaining);
            prop.eval_into(s, &mut probe);
            status_vector(&probe, lambda, &mut probe_status);
            if probe_status != status {
                bracket = Some((lo, s));
                break;
            }
            if s >= remaining {
                break;
            }
            lo = s;
            step = (2.0 * step).min(h_max);
        }

        let (set, signs) = pattern_of(&status);
        let mut segment = Segment {
            t_start: t,
            t_end: opts.t_max,
            active_set: set,
            signs,
            u_start: u.clone(),
            lambda_start: lambda,
            sign_stable: true,
        };

        let Some((mut lo, mut hi)) = bracket else {
            while out_idx < outputs.len() {
                let to = outputs[out_idx];
                samples.push(LcaState::from_internal(to, prop.eval((to - t).max(0.0)), lambda));
                out_idx += 1;
            }
            u = prop.eval(remaining);
            t = opts.t_max;
            segments.push(segment);
            break;
        };

        let mut iterations = 0;
        while hi - lo > opts.event_tol && iterations < 200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            prop.eval_into(mid, &mut probe);
            status_vector(&probe, lambda, &mut probe_status);
            if probe_status != status {
                hi = mid;
            } else {
                lo = mid;
            }
            iterations += 1;
        }

        let t_event = t + hi;
        while out_idx < outputs.len() && outputs[out_idx] < t_event {
            let to = outputs[out_idx];
            samples.push(LcaState::from_internal(to, prop.eval((to - t).max(0.0)), lambda));
            out_idx += 1;
        }

        let left = prop.eval(lo);
        let right = prop.eval(hi);
        max_gap = max_gap.max(norm_inf(&(&right - &left)));
        status_vector(&right, lambda, &mut probe_status);
        let (changes, flips) = diff_status(&status, &probe_status);
        if flips > 0 {
            segment.sign_stable = false;
            sign_violations += flips;
        }
        segment.t_end = t_event;
        segments.push(segment);
        switches += changes.len();
        events.push(SwitchEvent { t: t_event, changes });
        if switches > max_switches {
            return Err(Error::DivergenceSuspected { switches, time: t_event });
        }
        if right.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericFailure { time: t_event, reason: "state became non-finite".into() });
        }
        core::mem::swap(&mut status, &mut probe_status);
        u = right;
        t = t_event;
    }

    let rhs = op.rhs(&u, lambda) * op.tau();
    let converged = norm_inf(&rhs) <= opts.convergence_tol * (1.0 + norm_inf(&phi_t_y));
    let final_state = LcaState::from_internal(t, u, lambda);
    Ok(Trajectory {
        backend: Backend::Switched,
        tau: op.tau(),
        initial_state,
        samples,
        switch_events: events,
        segments,
        final_state,
        converged,
        max_active,
        sign_violations,
        max_continuity_gap: max_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate_fixed_step, FixedStepOptions, ThresholdSchedule};
    use crate::ensemble::{gen_matrix, gen_sparse_signal, measure, trial_rng, AmplitudeMode, Ensemble, MeasurementMatrix, SparseSignal};
    use approx::assert_abs_diff_eq;

    fn scalar(y: f64, lambda: f64) -> ProblemInstance {
        let phi = MeasurementMatrix::explicit(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let sig = SparseSignal::from_values(DVector::from_element(1, y));
        measure(phi, sig, 0.0, ThresholdSchedule::constant(lambda).unwrap(), &mut trial_rng(0, 0)).unwrap()
    }

    fn random(seed: u64, m: usize, n: usize, s: usize, lambda: f64) -> ProblemInstance {
        let mut rng = trial_rng(seed, 0);
        let phi = gen_matrix(m, n, Ensemble::GaussianUnitCol, &mut rng).unwrap();
        let sig = gen_sparse_signal(n, s, AmplitudeMode::EqualMagnitude, true, &mut rng).unwrap();
        measure(phi, sig, 0.0, ThresholdSchedule::constant(lambda).unwrap(), &mut rng).unwrap()
    }

    #[test]
    fn scalar_activation_time_is_ln2() {
        let traj = simulate_switched(&scalar(2.0, 1.0), None, &SwitchedOptions::default()).unwrap();
        assert_eq!(traj.switch_events.len(), 1);
        assert_abs_diff_eq!(traj.switch_events[0].t, core::f64::consts::LN_2, epsilon = 1e-11);
        assert_abs_diff_eq!(traj.final_state.a[0], 1.0, epsilon = 1e-6);
        assert!(traj.max_continuity_gap <= 1e-11);
    }

    #[test]
    fn starting_at_the_fixed_point_never_switches() {
        let u_star = DVector::from_element(1, 2.0);
        let traj = simulate_switched(&scalar(2.0, 1.0), Some(&u_star), &SwitchedOptions::default()).unwrap();
        assert!(traj.switch_events.is_empty());
        for s in &traj.samples {
            assert_abs_diff_eq!(s.u[0], 2.0, epsilon = 1e-14);
        }
        assert!(traj.converged);
    }

    #[test]
    fn propagator_matches_fine_rk4_within_a_segment() {
        let inst = random(3, 12, 20, 2, 0.05);
        let n = inst.n();
        let u0 = DVector::from_fn(n, |i, _| 0.3 * ((i as f64) * 1.7).sin());
        let gram = inst.phi().tr_mul(inst.phi());
        let prop = SegmentPropagator::new(&gram, &inst.phi().tr_mul(inst.y()), &u0, 0.05, 0.0).unwrap();
        // linear dynamics with the active set frozen
        let p = prop.active_set().to_vec();
        let mut frozen = DVector::zeros(n);
        let f = |u: &DVector<f64>, out: &mut DVector<f64>| {
            let mut a = DVector::zeros(n);
            for (i, &k) in p.iter().enumerate() {
                a[k] = u[k] - 0.05 * prop.signs[i];
            }
            *out = -u - (&gram * &a - &a) + inst.phi().tr_mul(inst.y());
        };
        let mut u = u0.clone();
        let h = 1e-3;
        for _ in 0..300 {
            let (mut k1, mut k2, mut k3, mut k4) = (frozen.clone(), frozen.clone(), frozen.clone(), frozen.clone());
            f(&u, &mut k1);
            f(&(&u + &k1 * (h / 2.0)), &mut k2);
            f(&(&u + &k2 * (h / 2.0)), &mut k3);
            f(&(&u + &k3 * h), &mut k4);
            u += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        frozen = prop.eval(0.3);
        assert!((frozen - u).amax() < 1e-12);
    }

    #[test]
    fn steady_state_is_a_rest_point_of_the_segment() {
        let inst = random(5, 12, 20, 2, 0.05);
        let gram = inst.phi().tr_mul(inst.phi());
        let phi_t_y = inst.phi().tr_mul(inst.y());
        let u0 = DVector::from_fn(20, |i, _| if i % 5 == 0 { 0.4 } else { 0.0 });
        let prop = SegmentPropagator::new(&gram, &phi_t_y, &u0, 0.05, 0.0).unwrap();
        let inf = prop.steady_state().unwrap();
        assert!((prop.eval(200.0) - &inf).amax() < 1e-9);
    }

    #[test]
    fn agrees_with_fixed_step() {
        let inst = random(11, 15, 20, 2, 0.1);
        let sw = simulate_switched(&inst, None, &SwitchedOptions::default()).unwrap();
        let fx = simulate_fixed_step(
            &inst,
            None,
            &FixedStepOptions { dt: 1e-3, stop_on_convergence: false, ..Default::default() },
        )
        .unwrap();
        assert!((&sw.final_state.u - &fx.final_state.u).norm() < 1e-6);
        assert!(sw.all_segments_sign_stable());
        for (a, b) in sw.samples.iter().zip(&fx.samples) {
            assert!((a.t - b.t).abs() < 1e-12);
            assert!((&a.u - &b.u).amax() < 1e-6);
        }
    }

    #[test]
    fn decaying_threshold_is_rejected() {
        let inst = scalar(2.0, 1.0).with_threshold(ThresholdSchedule::exponential_decay(1.0, 0.5, 1.0).unwrap());
        assert!(matches!(simulate_switched(&inst, None, &SwitchedOptions::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn switch_budget_is_enforced() {
        let inst = random(2, 15, 20, 2, 0.02);
        let opts = SwitchedOptions { max_switches: Some(1), ..Default::default() };
        let err = simulate_switched(&inst, None, &opts);
        assert!(matches!(err, Err(Error::DivergenceSuspected { .. })));
    }
}
