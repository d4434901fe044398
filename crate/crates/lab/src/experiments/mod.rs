//! Experiment runners. Each `run_*` returns its results in memory and
//! [`run_and_write`] persists them.

mod audit;
mod decay;
mod grid;
mod rate;

use std::path::Path;
use std::time::Instant;

use lca_core::analysis::{active_set_stats, error_series, fit_rate, time_to_fraction};
use lca_core::dynamics::{
    simulate_fixed_step, simulate_switched, FixedStepOptions, OutputTimes, SwitchedOptions, ThresholdSchedule, Trajectory,
};
use lca_core::ensemble::{gen_matrix, gen_sparse_signal, measure, trial_rng, AmplitudeMode, Ensemble, ProblemInstance, TrialRng};
use lca_core::oracle::check_optimality;
use lca_core::DVector;

pub use audit::{run_theorem_audit, AuditResult, AuditRow, AuditSummary, LemmaRow};
pub use decay::{run_threshold_decay, DecayResult, DecayTrial, Example as DecayExample, DECAY_LABELS};
pub use grid::{run_grid, CellSummary, GridResult};
pub use rate::{run_rate_curves, RateCurve, RateResult};

use crate::config::{BackendChoice, ExperimentConfig, ExperimentKind};
use crate::error::LabResult;
use crate::output::{OutputDir, TrialRecord};

/// Random stream for trial `trial` of stream family `stream`.
pub fn instance_rng(seed: u64, stream: u64, trial: u64) -> TrialRng {
    trial_rng(seed.wrapping_add(stream.wrapping_mul(1_000_003)), trial)
}

/// Problem draw shared by all experiments.
#[derive(Debug, Clone, Copy)]
pub struct Draw {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub sigma: f64,
    pub ensemble: Ensemble,
    pub amplitude: AmplitudeMode,
}

impl Draw {
    pub fn from_config(cfg: &ExperimentConfig, s: usize) -> Self {
        Draw { n: cfg.n, m: cfg.m, s, sigma: cfg.sigma, ensemble: cfg.ensemble, amplitude: cfg.amplitude }
    }

    pub fn sample(&self, lambda: f64, rng: &mut TrialRng) -> lca_core::Result<ProblemInstance> {
        let phi = gen_matrix(self.m, self.n, self.ensemble, rng)?;
        let signal = gen_sparse_signal(self.n, self.s, self.amplitude, true, rng)?;
        measure(phi, signal, self.sigma, ThresholdSchedule::constant(lambda)?, rng)
    }
}

/// Integration settings for one run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub backend: BackendChoice,
    pub t_max: f64,
    pub dt: f64,
    pub output_times: OutputTimes,
}

impl RunSpec {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        RunSpec { backend: cfg.backend, t_max: cfg.t_max, dt: cfg.dt, output_times: OutputTimes::Uniform(cfg.sample_dt) }
    }

    pub fn simulate(&self, instance: &ProblemInstance, u0: Option<&DVector<f64>>) -> lca_core::Result<Trajectory> {
        match self.backend {
            BackendChoice::Fixed => {
                let opts = FixedStepOptions {
                    dt: self.dt,
                    t_max: self.t_max,
                    output_times: self.output_times.clone(),
                    ..Default::default()
                };
                simulate_fixed_step(instance, u0, &opts)
            }
            BackendChoice::Switched => {
                let opts =
                    SwitchedOptions { t_max: self.t_max, output_times: self.output_times.clone(), ..Default::default() };
                simulate_switched(instance, u0, &opts)
            }
        }
    }
}

/// Summarizes a finished run against its own final state.
pub fn trial_record(trial_index: usize, instance: &ProblemInstance, traj: &Trajectory) -> TrialRecord {
    let support = instance.signal().support();
    let stats = active_set_stats(traj, support);
    let fin = &traj.final_state;
    let kkt = check_optimality(&fin.a, instance.phi(), instance.y(), fin.lambda, 0.0);
    let (times, errors) = error_series(traj, &fin.u);
    TrialRecord {
        trial_index,
        s: support.len(),
        lambda: fin.lambda,
        q_obs: stats.q_obs,
        contained: stats.contained,
        fitted_rate: fit_rate(traj, &fin.u).ok().and_then(|r| r.fitted_rate),
        final_kkt_residual: kkt.max_violation,
        time_to_1pct: time_to_fraction(&times, &errors, 0.01),
        converged: traj.converged,
        switches: traj.switch_count(),
        label: None,
    }
}

/// Runs the configured experiment and writes every artifact into
/// `cfg.output_dir` (or `out` when given).
pub fn run_and_write(cfg: &ExperimentConfig, out: Option<&Path>) -> LabResult<OutputDir> {
    let started = Instant::now();
    let mut dir = OutputDir::create(out.unwrap_or(&cfg.output_dir))?;
    dir.write_config(cfg)?;
    match cfg.experiment {
        ExperimentKind::SupportContainment => grid::write_containment(&mut dir, &run_grid(cfg)?)?,
        ExperimentKind::ActiveRatioHeatmap => grid::write_heatmap(&mut dir, &run_grid(cfg)?)?,
        ExperimentKind::ThresholdDecay => decay::write(&mut dir, cfg, &run_threshold_decay(cfg)?)?,
        ExperimentKind::RateCurves => rate::write(&mut dir, &run_rate_curves(cfg)?)?,
        ExperimentKind::TheoremAudit => audit::write(&mut dir, &run_theorem_audit(cfg)?)?,
    }
    dir.write_manifest(cfg, started.elapsed())?;
    Ok(dir)
}
