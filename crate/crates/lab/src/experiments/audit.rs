//! Theorem and lemma statements checked against simulated trajectories at
//! sizes where exact RIP constants are affordable.

use std::collections::BTreeMap;

use lca_core::analysis::{
    active_set_stats, c_delta, check_lemma1, check_lemma2, check_theorem2, check_theorem3, rip_bruteforce,
    theorem2_min_lambda, theorem3_min_lambda, Lemma2Report, Theorem, TheoremCheck,
};
use lca_core::dynamics::{OutputTimes, ThresholdSchedule, Trajectory};
use lca_core::ensemble::{ProblemInstance, TrialRng};
use lca_core::linalg::union_sorted;
use lca_core::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::{instance_rng, Draw, RunSpec};
use crate::config::{AuditFamily, ExperimentConfig};
use crate::error::LabResult;
use crate::formats::{num, opt_num, write_csv, InstanceBundle};
use crate::output::OutputDir;

const THEOREM2_STREAM: u64 = 100;
const THEOREM3_STREAM: u64 = 200;
const LEMMA_STREAM: u64 = 300;

#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    pub theorem: Theorem,
    pub attempt: usize,
    pub s: usize,
    pub q: Option<usize>,
    pub lambda: f64,
    /// Exact RIP constant the check used.
    pub delta: f64,
    /// The conditions can hold at some threshold.
    pub applicable: bool,
    pub holds: bool,
    /// The claimed trajectory property was observed.
    pub observed: Option<bool>,
    /// `holds => observed`.
    pub agreement: bool,
    pub q_obs: Option<usize>,
    pub switches: Option<usize>,
    pub check: Option<TheoremCheck>,
    pub diagnostic: Option<String>,
    /// Full state of a disagreeing instance.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaRow {
    pub instance: usize,
    pub lambda: f64,
    pub lemma1_checked: usize,
    pub lemma1_not_applicable: usize,
    pub lemma1_holds: bool,
    /// Largest `actual / bound` over checked candidates.
    pub lemma1_max_ratio: f64,
    pub lemma2_order: usize,
    pub lemma2_delta: Option<f64>,
    pub lemma2: Option<Lemma2Report>,
    pub error: Option<String>,
}

impl LemmaRow {
    pub fn passes(&self) -> bool {
        self.error.is_none() && self.lemma1_holds && self.lemma2.as_ref().is_none_or(|r| r.holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSummary {
    pub name: String,
    pub attempts: usize,
    pub applicable: usize,
    pub holding: usize,
    /// Holding instances where the claim was observed.
    pub confirmed: usize,
    pub disagreements: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditResult {
    pub theorem2: Vec<AuditRow>,
    pub theorem3: Vec<AuditRow>,
    pub lemmas: Vec<LemmaRow>,
    pub summaries: Vec<AuditSummary>,
}

impl AuditResult {
    pub fn summary(&self, name: &str) -> Option<&AuditSummary> {
        self.summaries.iter().find(|s| s.name == name)
    }
}

fn draw(cfg: &ExperimentConfig, fam: &AuditFamily) -> Draw {
    Draw { n: fam.n, m: fam.m, s: fam.s, sigma: fam.sigma, ensemble: cfg.ensemble, amplitude: cfg.amplitude }
}

fn run_spec(cfg: &ExperimentConfig) -> RunSpec {
    RunSpec { output_times: OutputTimes::Uniform(cfg.audit.sample_dt), ..RunSpec::from_config(cfg) }
}

fn uniform(rng: &mut TrialRng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Internal state whose output is `a0`.
fn state_for_output(a0: &DVector<f64>, lambda: f64) -> DVector<f64> {
    a0.map(|x| if x == 0.0 { 0.0 } else { x + lambda * x.signum() })
}

fn dump(inst: &ProblemInstance, u0: &DVector<f64>, traj: &Trajectory, check: &TheoremCheck) -> Value {
    json!({
        "instance": InstanceBundle::from_instance(inst, None),
        "u0": u0.iter().collect::<Vec<_>>(),
        "check": check,
        "final_u": traj.final_state.u.iter().collect::<Vec<_>>(),
        "visited_active_sets": traj.visited_active_sets(),
        "switch_events": traj.switch_events,
    })
}

fn finish(
    mut row: AuditRow,
    inst: &ProblemInstance,
    u0: &DVector<f64>,
    check: TheoremCheck,
    spec: &RunSpec,
    claim: impl Fn(&Trajectory) -> bool,
) -> AuditRow {
    row.holds = check.holds;
    row.diagnostic = check.diagnostic.clone();
    match spec.simulate(inst, Some(u0)) {
        Ok(traj) => {
            let observed = claim(&traj);
            row.observed = Some(observed);
            row.q_obs = Some(active_set_stats(&traj, inst.signal().support()).q_obs);
            row.switches = Some(traj.switch_count());
            row.agreement = !check.holds || observed;
            if !row.agreement {
                row.dump = Some(dump(inst, u0, &traj, &check));
            }
        }
        Err(e) => {
            row.diagnostic = Some(format!("simulation failed: {e}"));
            row.agreement = !check.holds;
        }
    }
    row.check = Some(check);
    row
}

fn empty_row(theorem: Theorem, attempt: usize, s: usize, q: Option<usize>) -> AuditRow {
    AuditRow {
        theorem,
        attempt,
        s,
        q,
        lambda: f64::NAN,
        delta: f64::NAN,
        applicable: false,
        holds: false,
        observed: None,
        agreement: true,
        q_obs: None,
        switches: None,
        check: None,
        diagnostic: None,
        dump: None,
    }
}

fn theorem2_attempt(cfg: &ExperimentConfig, spec: &RunSpec, attempt: usize) -> lca_core::Result<AuditRow> {
    let fam = &cfg.audit.theorem2;
    let mut rng = instance_rng(cfg.seed, THEOREM2_STREAM, attempt as u64);
    let inst = draw(cfg, fam).sample(1.0, &mut rng)?;
    let mut row = empty_row(Theorem::OptimalSupport, attempt, fam.s, None);
    let delta = rip_bruteforce(inst.phi(), fam.s + 1)?.delta;
    row.delta = delta;
    let min_lambda = match delta < 1.0 {
        true => theorem2_min_lambda(&inst, delta)?,
        false => None,
    };
    let Some(min_lambda) = min_lambda else {
        row.diagnostic = Some("no threshold satisfies the conditions".into());
        return Ok(row);
    };
    row.applicable = true;
    let lambda = min_lambda * uniform(&mut rng, fam.lambda_range);
    row.lambda = lambda;
    let inst = inst.with_threshold(ThresholdSchedule::constant(lambda)?);
    let a_dag = inst.signal().values();
    let a0 = if attempt % 2 == 0 {
        DVector::zeros(fam.n)
    } else {
        let radius = c_delta(fam.s, delta, a_dag.norm(), inst.noise().norm(), lambda)? * rng.random_range(0.0..0.9);
        let mut g = DVector::zeros(fam.n);
        for &k in inst.signal().support() {
            g[k] = rng.sample::<f64, _>(StandardNormal);
        }
        let norm = g.norm();
        a_dag + g * (radius / norm)
    };
    let u0 = state_for_output(&a0, lambda);
    let check = check_theorem2(&inst, delta, &a0)?;
    let support = inst.signal().support().to_vec();
    Ok(finish(row, &inst, &u0, check, spec, |t| active_set_stats(t, &support).contained))
}

fn theorem3_attempt(cfg: &ExperimentConfig, spec: &RunSpec, attempt: usize) -> lca_core::Result<AuditRow> {
    let fam = &cfg.audit.theorem3;
    let q = fam.q.expect("validated");
    let mut rng = instance_rng(cfg.seed, THEOREM3_STREAM, attempt as u64);
    let inst = draw(cfg, fam).sample(1.0, &mut rng)?;
    let mut row = empty_row(Theorem::BoundedActiveSet, attempt, fam.s, Some(q));
    let delta = rip_bruteforce(inst.phi(), fam.s + q)?.delta;
    row.delta = delta;
    let Some(min_lambda) = theorem3_min_lambda(&inst, delta, q)? else {
        row.diagnostic = Some(format!("delta_bar = {delta} leaves no admissible threshold"));
        return Ok(row);
    };
    row.applicable = true;
    let lambda = min_lambda * uniform(&mut rng, fam.lambda_range);
    row.lambda = lambda;
    let inst = inst.with_threshold(ThresholdSchedule::constant(lambda)?);
    let mut u0 = DVector::zeros(fam.n);
    if attempt % 2 == 1 {
        for k in index::sample(&mut rng, fam.n, q) {
            u0[k] = rng.sample::<f64, _>(StandardNormal);
        }
        let scale = lambda * (q as f64).sqrt() * rng.random_range(0.0..1.0) / u0.norm();
        u0 *= scale;
    }
    let check = check_theorem3(&inst, delta, q, &u0)?;
    let support = inst.signal().support().to_vec();
    Ok(finish(row, &inst, &u0, check, spec, |t| active_set_stats(t, &support).q_obs <= q))
}

/// Exact RIP constants by order, computed on demand.
struct DeltaCache<'a> {
    phi: &'a DMatrix<f64>,
    known: BTreeMap<usize, Option<f64>>,
}

impl DeltaCache<'_> {
    /// `None` when the order is out of reach or the constant is not below one.
    fn get(&mut self, k: usize) -> Option<f64> {
        let phi = self.phi;
        *self.known.entry(k).or_insert_with(|| rip_bruteforce(phi, k).ok().map(|r| r.delta).filter(|d| *d < 1.0))
    }
}

fn lemma_instance(cfg: &ExperimentConfig, spec: &RunSpec, index: usize) -> LemmaRow {
    let fam = &cfg.audit.lemmas;
    let mut rng = instance_rng(cfg.seed, LEMMA_STREAM, index as u64);
    let lambda = uniform(&mut rng, fam.lambda_range);
    let mut row = LemmaRow {
        instance: index,
        lambda,
        lemma1_checked: 0,
        lemma1_not_applicable: 0,
        lemma1_holds: true,
        lemma1_max_ratio: 0.0,
        lemma2_order: 0,
        lemma2_delta: None,
        lemma2: None,
        error: None,
    };
    let outcome = (|| -> lca_core::Result<()> {
        let inst = draw(cfg, fam).sample(lambda, &mut rng)?;
        let traj = spec.simulate(&inst, None)?;
        let support = inst.signal().support();
        let mut deltas = DeltaCache { phi: inst.phi(), known: BTreeMap::new() };
        for (set, signs) in traj.visited_patterns() {
            let order = union_sorted(&set, support).len();
            let signs: Vec<f64> = signs.iter().map(|&z| z as f64).collect();
            let report = match deltas.get(order) {
                Some(d) => check_lemma1(&inst, &set, &signs, d).ok(),
                None => None,
            };
            match report {
                Some(r) => {
                    row.lemma1_checked += 1;
                    row.lemma1_holds &= r.holds;
                    if r.bound > 0.0 {
                        row.lemma1_max_ratio = row.lemma1_max_ratio.max(r.actual / r.bound);
                    }
                }
                None => row.lemma1_not_applicable += 1,
            }
        }
        let p = traj.segments.iter().map(|s| s.active_set.len()).max().unwrap_or(0).max(1);
        let order = traj.segments.iter().map(|s| union_sorted(&s.active_set, support).len()).max().unwrap_or(support.len());
        row.lemma2_order = order;
        row.lemma2_delta = deltas.get(order);
        if let Some(d) = row.lemma2_delta {
            row.lemma2 = Some(check_lemma2(&traj, &inst, p, d)?);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    row
}

/// Draws attempts in batches until `target` holding instances are found or
/// the attempt budget is spent. Rows past the target are dropped.
fn collect_holding<F>(target: usize, budget: usize, attempt: F) -> Vec<AuditRow>
where
    F: Fn(usize) -> AuditRow + Sync,
{
    let mut rows = Vec::new();
    let mut holding = 0;
    let mut next = 0;
    while holding < target && next < budget {
        let end = (next + target.max(1)).min(budget);
        let batch: Vec<AuditRow> = (next..end).into_par_iter().map(&attempt).collect();
        next = end;
        for row in batch {
            holding += row.holds as usize;
            rows.push(row);
            if holding == target {
                break;
            }
        }
    }
    rows
}

fn summarize(name: &str, rows: &[AuditRow]) -> AuditSummary {
    AuditSummary {
        name: name.to_owned(),
        attempts: rows.len(),
        applicable: rows.iter().filter(|r| r.applicable).count(),
        holding: rows.iter().filter(|r| r.holds).count(),
        confirmed: rows.iter().filter(|r| r.holds && r.observed == Some(true)).count(),
        disagreements: rows.iter().filter(|r| !r.agreement).count(),
    }
}

fn error_row(theorem: Theorem, attempt: usize, fam: &AuditFamily, e: lca_core::Error) -> AuditRow {
    AuditRow { diagnostic: Some(format!("instance failed: {e}")), ..empty_row(theorem, attempt, fam.s, fam.q) }
}

/// `trials` holding instances per theorem and `trials` lemma instances.
pub fn run_theorem_audit(cfg: &ExperimentConfig) -> LabResult<AuditResult> {
    let spec = run_spec(cfg);
    let budget = cfg.trials * cfg.audit.max_attempts_factor;
    let theorem2 = collect_holding(cfg.trials, budget, |i| {
        theorem2_attempt(cfg, &spec, i).unwrap_or_else(|e| error_row(Theorem::OptimalSupport, i, &cfg.audit.theorem2, e))
    });
    let theorem3 = collect_holding(cfg.trials, budget, |i| {
        theorem3_attempt(cfg, &spec, i).unwrap_or_else(|e| error_row(Theorem::BoundedActiveSet, i, &cfg.audit.theorem3, e))
    });
    let lemmas: Vec<LemmaRow> = (0..cfg.trials).into_par_iter().map(|i| lemma_instance(cfg, &spec, i)).collect();
    let lemma_summary = AuditSummary {
        name: "lemmas".into(),
        attempts: lemmas.len(),
        applicable: lemmas.iter().filter(|r| r.error.is_none() && (r.lemma1_checked > 0 || r.lemma2.is_some())).count(),
        holding: lemmas.iter().filter(|r| r.error.is_none()).count(),
        confirmed: lemmas.iter().filter(|r| r.passes()).count(),
        disagreements: lemmas.iter().filter(|r| !r.passes()).count(),
    };
    let summaries = vec![summarize("theorem2", &theorem2), summarize("theorem3", &theorem3), lemma_summary];
    Ok(AuditResult { theorem2, theorem3, lemmas, summaries })
}

fn write_theorem_csv(dir: &mut OutputDir, name: &str, rows: &[AuditRow]) -> LabResult<()> {
    let header = ["attempt", "s", "q", "lambda", "delta", "applicable", "holds", "observed", "agreement", "q_obs", "switches"];
    let out = rows.iter().map(|r| {
        [
            r.attempt.to_string(),
            r.s.to_string(),
            r.q.map(|q| q.to_string()).unwrap_or_default(),
            num(r.lambda),
            num(r.delta),
            r.applicable.to_string(),
            r.holds.to_string(),
            r.observed.map(|o| o.to_string()).unwrap_or_default(),
            r.agreement.to_string(),
            r.q_obs.map(|q| q.to_string()).unwrap_or_default(),
            r.switches.map(|q| q.to_string()).unwrap_or_default(),
        ]
    });
    let p = dir.file(name);
    write_csv(&p, &header, out)
}

pub(crate) fn write(dir: &mut OutputDir, res: &AuditResult) -> LabResult<()> {
    let records = res
        .theorem2
        .iter()
        .chain(&res.theorem3)
        .map(|r| serde_json::to_value(AuditRow { dump: None, ..r.clone() }))
        .chain(res.lemmas.iter().map(serde_json::to_value))
        .collect::<Result<Vec<_>, _>>()?;
    dir.write_jsonl("trials.jsonl", records)?;
    write_theorem_csv(dir, "audit_theorem2.csv", &res.theorem2)?;
    write_theorem_csv(dir, "audit_theorem3.csv", &res.theorem3)?;
    let header = [
        "instance",
        "lambda",
        "lemma1_checked",
        "lemma1_not_applicable",
        "lemma1_holds",
        "lemma1_max_ratio",
        "lemma2_order",
        "lemma2_delta",
        "lemma2_segments_checked",
        "lemma2_holds",
        "lemma2_max_ratio",
        "error",
    ];
    let rows = res.lemmas.iter().map(|r| {
        [
            r.instance.to_string(),
            num(r.lambda),
            r.lemma1_checked.to_string(),
            r.lemma1_not_applicable.to_string(),
            r.lemma1_holds.to_string(),
            num(r.lemma1_max_ratio),
            r.lemma2_order.to_string(),
            opt_num(r.lemma2_delta),
            r.lemma2.as_ref().map(|l| l.segments_checked.to_string()).unwrap_or_default(),
            r.lemma2.as_ref().map(|l| l.holds.to_string()).unwrap_or_default(),
            r.lemma2.as_ref().map(|l| num(l.max_ratio)).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ]
    });
    let p = dir.file("audit_lemmas.csv");
    write_csv(&p, &header, rows)?;
    let header = ["name", "attempts", "applicable", "holding", "confirmed", "disagreements"];
    let rows = res.summaries.iter().map(|s| {
        [
            s.name.clone(),
            s.attempts.to_string(),
            s.applicable.to_string(),
            s.holding.to_string(),
            s.confirmed.to_string(),
            s.disagreements.to_string(),
        ]
    });
    let p = dir.file("audit_summary.csv");
    write_csv(&p, &header, rows)?;
    let dumps: Vec<&Value> = res.theorem2.iter().chain(&res.theorem3).filter_map(|r| r.dump.as_ref()).collect();
    if !dumps.is_empty() {
        dir.write_jsonl("disagreements.jsonl", dumps)?;
    }
    Ok(())
}
