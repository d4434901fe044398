//! Support containment and active-set ratio over a `(lambda, S)` grid.

use rayon::prelude::*;
use serde::Serialize;

use super::{instance_rng, trial_record, Draw, RunSpec};
use crate::config::ExperimentConfig;
use crate::error::LabResult;
use crate::formats::{num, opt_num, write_csv};
use crate::output::{OutputDir, TrialFailure, TrialRecord};

/// Cells whose failure share reaches this fraction report no statistics.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub lambda: f64,
    pub s: usize,
    pub completed: usize,
    pub failed: usize,
    pub containment_fraction: Option<f64>,
    pub mean_q: Option<f64>,
    pub mean_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub lambdas: Vec<f64>,
    pub s_values: Vec<usize>,
    /// Row-major over `(lambda, S)`.
    pub cells: Vec<CellSummary>,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
}

impl GridResult {
    pub fn cell(&self, lambda_idx: usize, s_idx: usize) -> &CellSummary {
        &self.cells[lambda_idx * self.s_values.len() + s_idx]
    }
}

fn summarize(lambda: f64, s: usize, outcomes: &[Result<TrialRecord, TrialFailure>]) -> CellSummary {
    let ok: Vec<&TrialRecord> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let failed = outcomes.len() - ok.len();
    let usable = !ok.is_empty() && (failed as f64) < MAX_FAILURE_SHARE * outcomes.len() as f64;
    let k = ok.len() as f64;
    let stat = |f: &dyn Fn(&TrialRecord) -> f64| usable.then(|| ok.iter().map(|r| f(r)).sum::<f64>() / k);
    CellSummary {
        lambda,
        s,
        completed: ok.len(),
        failed,
        containment_fraction: stat(&|r| if r.contained { 1.0 } else { 0.0 }),
        mean_q: stat(&|r| r.q_obs as f64),
        mean_ratio: stat(&|r| r.q_obs as f64 / s as f64),
        max_ratio: usable.then(|| ok.iter().map(|r| r.q_obs as f64 / s as f64).fold(0.0, f64::max)),
    }
}

/// Simulates `trials` draws per cell. Draws depend on `(S, trial)` only, so
/// every threshold sees the same problems.
pub fn run_grid(cfg: &ExperimentConfig) -> LabResult<GridResult> {
    let spec = RunSpec::from_config(cfg);
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.lambda_grid.len())
        .flat_map(|li| (0..cfg.s_grid.len()).flat_map(move |si| (0..cfg.trials).map(move |t| (li, si, t))))
        .collect();
    let outcomes: Vec<Result<TrialRecord, TrialFailure>> = jobs
        .par_iter()
        .map(|&(li, si, t)| {
            let (lambda, s) = (cfg.lambda_grid[li], cfg.s_grid[si]);
            let fail = |e: lca_core::Error| TrialFailure { trial_index: t, s, lambda, error: e.to_string() };
            let mut rng = instance_rng(cfg.seed, si as u64, t as u64);
            let instance = Draw::from_config(cfg, s).sample(lambda, &mut rng).map_err(fail)?;
            let traj = spec.simulate(&instance, None).map_err(fail)?;
            Ok(trial_record(t, &instance, &traj))
        })
        .collect();
    let cells = outcomes
        .chunks(cfg.trials)
        .enumerate()
        .map(|(c, chunk)| {
            let (li, si) = (c / cfg.s_grid.len(), c % cfg.s_grid.len());
            summarize(cfg.lambda_grid[li], cfg.s_grid[si], chunk)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok(GridResult { lambdas: cfg.lambda_grid.clone(), s_values: cfg.s_grid.clone(), cells, records, failures })
}

fn write_matrix(dir: &mut OutputDir, name: &str, grid: &GridResult, value: impl Fn(&CellSummary) -> Option<f64>) -> LabResult<()> {
    let cols: Vec<String> = std::iter::once("lambda".to_owned()).chain(grid.s_values.iter().map(|s| format!("S={s}"))).collect();
    let header: Vec<&str> = cols.iter().map(String::as_str).collect();
    let rows = (0..grid.lambdas.len()).map(|li| {
        std::iter::once(num(grid.lambdas[li]))
            .chain((0..grid.s_values.len()).map(|si| opt_num(value(grid.cell(li, si)))))
            .collect::<Vec<_>>()
    });
    let p = dir.file(name);
    write_csv(&p, &header, rows)
}

fn write_cells(dir: &mut OutputDir, name: &str, grid: &GridResult) -> LabResult<()> {
    let header = ["lambda", "s", "completed", "failed", "containment_fraction", "mean_q", "mean_ratio", "max_ratio"];
    let rows = grid.cells.iter().map(|c| {
        [
            num(c.lambda),
            c.s.to_string(),
            c.completed.to_string(),
            c.failed.to_string(),
            opt_num(c.containment_fraction),
            opt_num(c.mean_q),
            opt_num(c.mean_ratio),
            opt_num(c.max_ratio),
        ]
    });
    let p = dir.file(name);
    write_csv(&p, &header, rows)
}

fn write_records(dir: &mut OutputDir, grid: &GridResult) -> LabResult<()> {
    dir.write_jsonl("trials.jsonl", &grid.records)?;
    if !grid.failures.is_empty() {
        dir.write_jsonl("failures.jsonl", &grid.failures)?;
    }
    Ok(())
}

pub(crate) fn write_containment(dir: &mut OutputDir, grid: &GridResult) -> LabResult<()> {
    write_records(dir, grid)?;
    write_matrix(dir, "fig1_support_containment.csv", grid, |c| c.containment_fraction)?;
    write_cells(dir, "fig1_cells.csv", grid)
}

pub(crate) fn write_heatmap(dir: &mut OutputDir, grid: &GridResult) -> LabResult<()> {
    write_records(dir, grid)?;
    write_matrix(dir, "fig2_active_ratio_mean.csv", grid, |c| c.mean_ratio)?;
    write_matrix(dir, "fig2_active_ratio_max.csv", grid, |c| c.max_ratio)?;
    write_cells(dir, "fig2_cells.csv", grid)
}
