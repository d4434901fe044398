//! Mean normalized error curves against the exponential-decay overlays.

use lca_core::analysis::{error_series, rip_estimate, rip_estimate_inflated, theoretical_decay};
use lca_core::dynamics::{fixed_point_for_support, support_and_signs, OutputTimes};
use lca_core::oracle::check_optimality;
use rayon::prelude::*;
use serde::Serialize;

use super::{instance_rng, trial_record, Draw, RunSpec};
use crate::config::{ExperimentConfig, SweepParam};
use crate::error::LabResult;
use crate::formats::{num, write_csv};
use crate::output::{OutputDir, TrialRecord};

/// Overlay comparisons start here, in units of `tau`.
pub const WINDOW_START: f64 = 0.5;
pub const WINDOW_END: f64 = 5.0;

#[derive(Debug, Clone, Serialize)]
pub struct RateCurve {
    pub value: f64,
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub lambda: f64,
    pub times: Vec<f64>,
    /// Mean over included trials of `||u(t) - u*|| / ||u(0) - u*||`.
    pub mean: Vec<f64>,
    pub delta_tight: f64,
    pub delta_loose: f64,
    pub overlay_tight: Vec<f64>,
    pub overlay_loose: Vec<f64>,
    pub included: usize,
    /// Trials whose limit failed KKT verification.
    pub excluded: usize,
    /// Largest `mean / overlay` over the comparison window.
    pub max_ratio_tight: f64,
    pub max_ratio_loose: f64,
}

impl RateCurve {
    pub fn within_factor_of_tight(&self, factor: f64) -> bool {
        self.max_ratio_tight <= factor
    }

    pub fn below_loose(&self) -> bool {
        self.max_ratio_loose <= 1.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RateResult {
    pub sweep: SweepParam,
    pub curves: Vec<RateCurve>,
    pub records: Vec<TrialRecord>,
}

struct Point {
    n: usize,
    m: usize,
    s: usize,
    lambda: f64,
}

fn point(cfg: &ExperimentConfig, value: f64) -> Point {
    let mut p = Point { n: cfg.n, m: cfg.m, s: cfg.s_grid[0], lambda: cfg.lambda_grid[0] };
    match cfg.rate.sweep {
        SweepParam::Lambda => p.lambda = value,
        SweepParam::N => p.n = value as usize,
        SweepParam::M => p.m = value as usize,
        SweepParam::S => p.s = value as usize,
    }
    p
}

/// Normalized error series against the KKT-verified limit, or `None`.
fn trial(cfg: &ExperimentConfig, spec: &RunSpec, p: &Point, stream: u64, t: usize) -> lca_core::Result<(TrialRecord, Option<Vec<f64>>)> {
    let draw = Draw { n: p.n, m: p.m, s: p.s, ..Draw::from_config(cfg, p.s) };
    let mut rng = instance_rng(cfg.seed, stream, t as u64);
    let inst = draw.sample(p.lambda, &mut rng)?;
    let traj = spec.simulate(&inst, None)?;
    let record = trial_record(t, &inst, &traj);
    let (active, signs) = support_and_signs(&traj.final_state.a);
    let limit = match fixed_point_for_support(inst.phi(), inst.y(), p.lambda, &active, &signs, cfg.rate.kkt_tol) {
        Ok(Some((a, u))) if check_optimality(&a, inst.phi(), inst.y(), p.lambda, cfg.rate.kkt_tol).holds => u,
        _ => return Ok((record, None)),
    };
    let (_, errors) = error_series(&traj, &limit);
    let e0 = errors[0];
    if !(e0 > 0.0) {
        return Ok((record, None));
    }
    Ok((record, Some(errors.iter().map(|e| e / e0).collect())))
}

pub fn run_rate_curves(cfg: &ExperimentConfig) -> LabResult<RateResult> {
    let count = (cfg.rate.grid_end / cfg.rate.grid_step + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=count).map(|k| k as f64 * cfg.rate.grid_step).collect();
    let spec = RunSpec { output_times: OutputTimes::Explicit(times.clone()), ..RunSpec::from_config(cfg) };
    let mut curves = Vec::new();
    let mut records = Vec::new();
    for (vi, &value) in cfg.rate.values.iter().enumerate() {
        let p = point(cfg, value);
        let outcomes: Vec<_> = (0..cfg.trials).into_par_iter().map(|t| trial(cfg, &spec, &p, vi as u64, t)).collect();
        let mut sum = vec![0.0; times.len()];
        let (mut included, mut excluded) = (0, 0);
        for o in outcomes {
            let (mut rec, series) = o?;
            rec.label = Some(format!("{}={}", sweep_name(cfg.rate.sweep), num(value)));
            records.push(rec);
            match series {
                Some(e) => {
                    included += 1;
                    sum.iter_mut().zip(&e).for_each(|(s, x)| *s += x);
                }
                None => excluded += 1,
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| if included > 0 { s / included as f64 } else { f64::NAN }).collect();
        let delta_tight = rip_estimate(p.s, p.n, p.m)?.delta;
        let delta_loose = rip_estimate_inflated(p.s, cfg.rate.estimate_factor, p.n, p.m)?.delta;
        let overlay = |d: f64| if d < 1.0 { theoretical_decay(d, 1.0, &times) } else { Ok(vec![1.0; times.len()]) };
        let overlay_tight = overlay(delta_tight)?;
        let overlay_loose = overlay(delta_loose)?;
        let max_ratio = |ov: &[f64]| {
            times
                .iter()
                .zip(mean.iter().zip(ov))
                .filter(|(t, _)| **t >= WINDOW_START - 1e-12 && **t <= WINDOW_END + 1e-12)
                .map(|(_, (m, o))| m / o)
                .fold(0.0, f64::max)
        };
        curves.push(RateCurve {
            value,
            n: p.n,
            m: p.m,
            s: p.s,
            lambda: p.lambda,
            max_ratio_tight: max_ratio(&overlay_tight),
            max_ratio_loose: max_ratio(&overlay_loose),
            times: times.clone(),
            mean,
            delta_tight,
            delta_loose,
            overlay_tight,
            overlay_loose,
            included,
            excluded,
        });
    }
    Ok(RateResult { sweep: cfg.rate.sweep, curves, records })
}

fn sweep_name(p: SweepParam) -> &'static str {
    match p {
        SweepParam::Lambda => "lambda",
        SweepParam::N => "n",
        SweepParam::M => "m",
        SweepParam::S => "s",
    }
}

pub(crate) fn write(dir: &mut OutputDir, res: &RateResult) -> LabResult<()> {
    dir.write_jsonl("trials.jsonl", &res.records)?;
    let key = sweep_name(res.sweep);
    let header = [key, "t", "mean_error", "overlay_order_s", "overlay_loose"];
    let rows = res.curves.iter().flat_map(|c| {
        (0..c.times.len())
            .map(move |k| [num(c.value), num(c.times[k]), num(c.mean[k]), num(c.overlay_tight[k]), num(c.overlay_loose[k])])
    });
    let p = dir.file("fig4_rate_curves.csv");
    write_csv(&p, &header, rows)?;
    let header = [
        key,
        "n",
        "m",
        "s",
        "lambda",
        "included",
        "excluded",
        "delta_order_s",
        "delta_loose",
        "max_ratio_order_s",
        "max_ratio_loose",
    ];
    let rows = res.curves.iter().map(|c| {
        [
            num(c.value),
            c.n.to_string(),
            c.m.to_string(),
            c.s.to_string(),
            num(c.lambda),
            c.included.to_string(),
            c.excluded.to_string(),
            num(c.delta_tight),
            num(c.delta_loose),
            num(c.max_ratio_tight),
            num(c.max_ratio_loose),
        ]
    });
    let p = dir.file("fig4_summary.csv");
    write_csv(&p, &header, rows)
}
