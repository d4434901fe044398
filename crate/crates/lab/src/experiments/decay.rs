//! Fixed high threshold, fixed low threshold and a decaying threshold on the
//! same problem.

use lca_core::dynamics::{ThresholdSchedule, Trajectory};
use lca_core::ensemble::ProblemInstance;
use rayon::prelude::*;
use serde::Serialize;

use super::{instance_rng, trial_record, Draw, RunSpec};
use crate::config::{BackendChoice, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::formats::{num, opt_num, write_csv, write_json, write_trajectory};
use crate::output::{OutputDir, TrialRecord};

pub const DECAY_LABELS: [&str; 3] = ["fixed-high", "fixed-low", "decay"];

#[derive(Debug, Clone, Serialize)]
pub struct DecayTrial {
    pub trial_index: usize,
    /// Records in the order of [`DECAY_LABELS`].
    pub runs: [TrialRecord; 3],
    /// `||a_decay - a_low||_inf` between final outputs.
    pub final_difference: f64,
    /// Entries of the true support absent from the high-threshold final support.
    pub missed_by_high: usize,
    pub decay_faster: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayResult {
    pub trials: Vec<DecayTrial>,
    pub decay_faster_count: usize,
    pub max_final_difference: f64,
    #[serde(skip)]
    pub example: Option<Example>,
}

fn schedules(cfg: &ExperimentConfig) -> lca_core::Result<[ThresholdSchedule; 3]> {
    let d = &cfg.decay;
    Ok([
        ThresholdSchedule::constant(d.lambda_high)?,
        ThresholdSchedule::constant(d.lambda_low)?,
        ThresholdSchedule::exponential_decay(d.lambda_high, d.lambda_low, d.rate)?,
    ])
}

pub type Example = (ProblemInstance, [Trajectory; 3]);

/// Trajectories are kept for trial 0 only.
fn one_trial(cfg: &ExperimentConfig, spec: &RunSpec, t: usize) -> lca_core::Result<(DecayTrial, Option<Example>)> {
    let s = cfg.s_grid[0];
    let mut rng = instance_rng(cfg.seed, 0, t as u64);
    let base = Draw::from_config(cfg, s).sample(cfg.decay.lambda_low, &mut rng)?;
    let [high, low, dec] = schedules(cfg)?;
    let mut trajs = Vec::with_capacity(3);
    let mut runs = Vec::with_capacity(3);
    for (label, sched) in DECAY_LABELS.iter().zip([high, low, dec]) {
        let inst = base.clone().with_threshold(sched);
        let traj = spec.simulate(&inst, None)?;
        let mut rec = trial_record(t, &inst, &traj);
        rec.label = Some((*label).to_owned());
        runs.push(rec);
        trajs.push(traj);
    }
    let trajs: [Trajectory; 3] = trajs.try_into().expect("three runs");
    let runs: [TrialRecord; 3] = runs.try_into().expect("three runs");
    let final_difference = (&trajs[2].final_state.a - &trajs[1].final_state.a).amax();
    let high_support = &trajs[0].final_state.active_set;
    let missed_by_high = base.signal().support().iter().filter(|k| !high_support.contains(k)).count();
    let decay_faster = match (runs[2].time_to_1pct, runs[1].time_to_1pct) {
        (Some(d), Some(f)) => d < f,
        _ => false,
    };
    let trial = DecayTrial { trial_index: t, runs, final_difference, missed_by_high, decay_faster };
    Ok((trial, (t == 0).then(|| (base, trajs))))
}

pub fn run_threshold_decay(cfg: &ExperimentConfig) -> LabResult<DecayResult> {
    if cfg.backend == BackendChoice::Switched {
        return Err(LabError::config("threshold-decay needs the fixed-step backend"));
    }
    schedules(cfg)?;
    let spec = RunSpec::from_config(cfg);
    let outcomes: Vec<_> = (0..cfg.trials).into_par_iter().map(|t| one_trial(cfg, &spec, t)).collect();
    let mut trials = Vec::with_capacity(cfg.trials);
    let mut example = None;
    for o in outcomes {
        let (trial, ex) = o?;
        example = example.or(ex);
        trials.push(trial);
    }
    Ok(DecayResult {
        decay_faster_count: trials.iter().filter(|t| t.decay_faster).count(),
        max_final_difference: trials.iter().map(|t| t.final_difference).fold(0.0, f64::max),
        trials,
        example,
    })
}

pub(crate) fn write(dir: &mut OutputDir, cfg: &ExperimentConfig, res: &DecayResult) -> LabResult<()> {
    dir.write_jsonl("trials.jsonl", res.trials.iter().flat_map(|t| t.runs.iter()))?;
    let mut header = vec!["trial".to_owned()];
    for key in ["time_to_1pct", "q_obs"] {
        header.extend(DECAY_LABELS.iter().map(|l| format!("{key}_{l}")));
    }
    header.extend(["missed_by_high", "final_difference", "decay_faster"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = res.trials.iter().map(|t| {
        let mut row = vec![t.trial_index.to_string()];
        row.extend(t.runs.iter().map(|r| opt_num(r.time_to_1pct)));
        row.extend(t.runs.iter().map(|r| r.q_obs.to_string()));
        row.extend([t.missed_by_high.to_string(), num(t.final_difference), t.decay_faster.to_string()]);
        row
    });
    let p = dir.file("fig3_summary.csv");
    write_csv(&p, &header, rows)?;
    let p = dir.file("fig3_totals.json");
    write_json(
        &p,
        &serde_json::json!({
            "trials": res.trials.len(),
            "decay_faster_count": res.decay_faster_count,
            "max_final_difference": res.max_final_difference,
        }),
    )?;
    if let Some((inst, trajs)) = &res.example {
        for (label, traj) in DECAY_LABELS.iter().zip(trajs) {
            let stem = format!("fig3_{label}");
            dir.file(&format!("{stem}.csv"));
            dir.file(&format!("{stem}.events.json"));
            if cfg.dump_states {
                dir.file(&format!("{stem}.states.csv"));
            }
            write_trajectory(dir.root(), &stem, traj, inst, cfg.dump_states)?;
        }
        let header = ["index", "a_true", "a_fixed_high", "a_fixed_low", "a_decay"];
        let rows = (0..inst.n()).map(|k| {
            let mut row = vec![k.to_string(), num(inst.signal().values()[k])];
            row.extend(trajs.iter().map(|t| num(t.final_state.a[k])));
            row
        });
        let p = dir.file("fig3_final_solutions.csv");
        write_csv(&p, &header, rows)?;
    }
    Ok(())
}
