//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::cell::OnceCell;
use std::time::{Duration, Instant};

use lca_core::analysis::rip_bruteforce;
use lca_core::dynamics::{
    phi_fun, simulate_fixed_step, simulate_switched, soft_threshold, FixedStepOptions, OutputTimes, SwitchedOptions,
};
use lca_core::ensemble::{gen_matrix, trial_rng, AmplitudeMode, Ensemble, ProblemInstance};
use lca_core::oracle::{check_optimality, ista_solve, objective, IstaOptions};
use lca_core::{DMatrix, DVector};
use lca_lab::experiments::{instance_rng, run_grid, AuditResult, run_rate_curves, run_theorem_audit, run_threshold_decay, Draw};
use lca_lab::{ExperimentConfig, ExperimentKind};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn draw(n: usize, m: usize, s: usize, lambda: f64, seed: u64, trial: u64) -> ProblemInstance {
    let d = Draw { n, m, s, sigma: 0.0, ensemble: Ensemble::GaussianUnitCol, amplitude: AmplitudeMode::EqualMagnitude };
    d.sample(lambda, &mut instance_rng(seed, 0, trial)).expect("valid draw")
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn oracle_equivalence() -> Outcome {
    let (mut worst_gap, mut worst_kkt) = (0.0f64, 0.0f64);
    let mut all_optimal = true;
    let opts = FixedStepOptions { t_max: 300.0, output_times: OutputTimes::Uniform(10.0), ..Default::default() };
    for t in 0..50 {
        let inst = draw(50, 25, 3, 0.1, 11, t);
        let traj = simulate_fixed_step(&inst, None, &opts).map_err(|e| e.to_string())?;
        let ista = ista_solve(inst.phi(), inst.y(), 0.1, &IstaOptions::default()).map_err(|e| e.to_string())?;
        let a = &traj.final_state.a;
        worst_gap = worst_gap.max((a - &ista.solution).amax());
        for x in [a, &ista.solution] {
            let c = check_optimality(x, inst.phi(), inst.y(), 0.1, 1e-6);
            all_optimal &= c.holds;
            worst_kkt = worst_kkt.max(c.max_violation);
        }
    }
    verdict(
        worst_gap <= 1e-5 && all_optimal,
        format!("max |a_lca - a_ista|_inf = {worst_gap:.2e}, max KKT violation = {worst_kkt:.2e}"),
    )
}

fn backend_agreement() -> Outcome {
    let mut worst = 0.0f64;
    let mut violations = 0;
    let mut segments = 0;
    for t in 0..25 {
        let inst = draw(20, 15, 2, 0.1, 22, t);
        let fixed = FixedStepOptions { dt: 1e-3, t_max: 100.0, output_times: OutputTimes::Uniform(1.0), ..Default::default() };
        let switched = SwitchedOptions { t_max: 100.0, output_times: OutputTimes::Uniform(1.0), ..Default::default() };
        let a = simulate_fixed_step(&inst, None, &fixed).map_err(|e| e.to_string())?;
        let b = simulate_switched(&inst, None, &switched).map_err(|e| e.to_string())?;
        worst = worst.max((&a.final_state.u - &b.final_state.u).norm());
        violations += b.segments.iter().filter(|s| !s.sign_stable).count() + b.sign_violations;
        segments += b.segments.len();
    }
    verdict(
        worst <= 1e-6 && violations == 0,
        format!("max |u_fixed - u_switched| = {worst:.2e}, {violations} sign violations over {segments} segments"),
    )
}

fn theorem_audit(name: &str, audit: &AuditResult) -> Outcome {
    let s = audit.summary(name).ok_or("missing summary")?;
    verdict(
        s.holding >= 100 && s.confirmed == s.holding && s.disagreements == 0,
        format!(
            "{} holding of {} attempts, claim observed in {}/{}, {} disagreements",
            s.holding, s.attempts, s.confirmed, s.holding, s.disagreements
        ),
    )
}

fn lemma_audit(audit: &AuditResult) -> Outcome {
    let rows = &audit.lemmas;
    let l1: usize = rows.iter().map(|r| r.lemma1_checked).sum();
    let l1_na: usize = rows.iter().map(|r| r.lemma1_not_applicable).sum();
    let l2: usize = rows.iter().filter_map(|r| r.lemma2.as_ref()).map(|r| r.segments_checked).sum();
    let l2_na = rows.iter().filter(|r| r.lemma2.is_none()).count();
    let failing = rows.iter().filter(|r| !r.passes()).count();
    verdict(
        rows.len() >= 100 && failing == 0 && l1 > 0 && l2 > 0,
        format!(
            "{} instances, {failing} failing; lemma 1: {l1} candidates checked ({l1_na} not applicable); \
             lemma 2: {l2} segments checked ({l2_na} instances not applicable)",
            rows.len()
        ),
    )
}

fn active_set_statistics() -> Outcome {
    let mut cfg = ExperimentConfig::from_defaults(ExperimentKind::ActiveRatioHeatmap);
    cfg.lambda_grid = vec![0.06, 0.02];
    cfg.s_grid = vec![5];
    let grid = run_grid(&cfg).map_err(|e| e.to_string())?;
    let q06 = grid.cell(0, 0).mean_q.ok_or("too many failures at 0.06")?;
    let q02 = grid.cell(1, 0).mean_q.ok_or("too many failures at 0.02")?;
    verdict(
        (12.0..=35.0).contains(&q06) && (90.0..=270.0).contains(&q02),
        format!("mean q_obs = {q06:.1} at lambda 0.06, {q02:.1} at lambda 0.02"),
    )
}

fn threshold_decay() -> Outcome {
    let cfg = ExperimentConfig::from_defaults(ExperimentKind::ThresholdDecay);
    let res = run_threshold_decay(&cfg).map_err(|e| e.to_string())?;
    let mean = |i: usize| {
        let v: Vec<f64> = res.trials.iter().filter_map(|t| t.runs[i].time_to_1pct).collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    verdict(
        res.max_final_difference <= 1e-4 && res.decay_faster_count >= 80,
        format!(
            "final |a_decay - a_low|_inf <= {:.1e}; decay faster in {}/{} trials; mean time to 1%: fixed-low {:.2}, decay {:.2}",
            res.max_final_difference,
            res.decay_faster_count,
            res.trials.len(),
            mean(1),
            mean(2)
        ),
    )
}

fn rate_curves() -> Outcome {
    let cfg = ExperimentConfig::from_defaults(ExperimentKind::RateCurves);
    let res = run_rate_curves(&cfg).map_err(|e| e.to_string())?;
    let tight = res.curves.iter().find(|c| c.lambda == 0.1).ok_or("no lambda = 0.1 curve")?;
    let loose_ok = res.curves.iter().filter(|c| c.lambda >= 0.02).all(|c| c.below_loose());
    let detail: Vec<String> = res
        .curves
        .iter()
        .map(|c| format!("lambda {}: ratio {:.2} / {:.2} ({} excluded)", c.lambda, c.max_ratio_tight, c.max_ratio_loose, c.excluded))
        .collect();
    verdict(
        tight.within_factor_of_tight(2.0) && loose_ok && tight.included > 0,
        format!("mean/overlay maxima (order S / loose): {}", detail.join("; ")),
    )
}

fn nonexpansive() -> Result<usize, String> {
    let mut rng = trial_rng(91, 0);
    for _ in 0..10_000 {
        let n = rng.random_range(1..20);
        let lambda = rng.random_range(1e-6..2.0);
        let u = DVector::from_fn(n, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let v = DVector::from_fn(n, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
        let tu = soft_threshold(&u, lambda).map_err(|e| e.to_string())?;
        let tv = soft_threshold(&v, lambda).map_err(|e| e.to_string())?;
        if (tu - tv).norm() > (&u - &v).norm() * (1.0 + 1e-15) {
            return Err("soft threshold expanded a pair".into());
        }
    }
    Ok(10_000)
}

fn lyapunov() -> Result<f64, String> {
    let mut worst = f64::NEG_INFINITY;
    let opts = FixedStepOptions { t_max: 10.0, output_times: OutputTimes::EveryStep, stop_on_convergence: false, ..Default::default() };
    for t in 0..50 {
        let lambda = [0.05, 0.1, 0.2][t as usize % 3];
        let inst = draw(50, 25, 3, lambda, 33, t);
        let traj = simulate_fixed_step(&inst, None, &opts).map_err(|e| e.to_string())?;
        let v: Vec<f64> = traj.samples.iter().map(|s| objective(&s.a, inst.phi(), inst.y(), lambda)).collect();
        for w in v.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
    }
    if worst <= 1e-8 {
        Ok(worst)
    } else {
        Err(format!("energy rose by {worst:.2e} in one step"))
    }
}

fn rip_monotone() -> Result<(), String> {
    for t in 0..20 {
        let phi = gen_matrix(12, 18, Ensemble::GaussianUnitCol, &mut trial_rng(44, t)).map_err(|e| e.to_string())?;
        let d: Vec<f64> = (1..=5).map(|k| rip_bruteforce(phi.entries(), k).map(|r| r.delta)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        if d.windows(2).any(|w| w[0] > w[1] + 1e-12) {
            return Err(format!("non-monotone constants {d:?}"));
        }
    }
    Ok(())
}

fn phi_fun_limit() -> Result<f64, String> {
    let mut worst = 0.0f64;
    let mut rng = trial_rng(55, 0);
    for _ in 0..20 {
        let v = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t: f64 = rng.random_range(0.0..5.0);
        let nv = v.norm_squared();
        let p = &v * v.transpose() / nv;
        let got = phi_fun(&(&v * v.transpose()), t).map_err(|e| e.to_string())?;
        let want = (DMatrix::identity(6, 6) - &p) * t + &p * ((1.0 - (-nv * t).exp()) / nv);
        worst = worst.max((got - want).amax());
        let zero = phi_fun(&DMatrix::zeros(4, 4), t).map_err(|e| e.to_string())?;
        worst = worst.max((zero - DMatrix::identity(4, 4) * t).amax());
    }
    if worst <= 1e-10 {
        Ok(worst)
    } else {
        Err(format!("phi_fun off by {worst:.2e} at a zero eigenvalue"))
    }
}

fn property_suites() -> Outcome {
    let pairs = nonexpansive()?;
    let rise = lyapunov()?;
    rip_monotone()?;
    let phi_err = phi_fun_limit()?;
    Ok(format!(
        "{pairs} nonexpansive pairs; largest energy step {rise:.1e}; RIP monotone on 20 matrices (k <= 5); phi_fun limit error {phi_err:.1e}"
    ))
}

type Check<'a> = Box<dyn Fn() -> (Outcome, Option<Duration>) + 'a>;

fn main() {
    let started = Instant::now();
    let audit: OnceCell<(Result<AuditResult, String>, Duration)> = OnceCell::new();
    let audit_result = || {
        audit.get_or_init(|| {
            let t = Instant::now();
            let res = run_theorem_audit(&ExperimentConfig::from_defaults(ExperimentKind::TheoremAudit));
            (res.map_err(|e| e.to_string()), t.elapsed())
        })
    };
    let plain = |f: fn() -> Outcome| -> Check { Box::new(move || (f(), None)) };
    let audited = |f: &'static dyn Fn(&AuditResult) -> Outcome| -> Check {
        Box::new(move || {
            let (res, t) = audit_result();
            (res.as_ref().map_err(Clone::clone).and_then(f), Some(*t))
        })
    };
    let criteria: Vec<(&str, u64, Check)> = vec![
        ("1 oracle equivalence", 60, plain(oracle_equivalence)),
        ("2 backend agreement", 60, plain(backend_agreement)),
        ("3 optimal-support audit", 300, audited(&|a| theorem_audit("theorem2", a))),
        ("4 bounded-active-set audit", 300, audited(&|a| theorem_audit("theorem3", a))),
        ("5 active-set statistics", 900, plain(active_set_statistics)),
        ("6 threshold decay", 600, plain(threshold_decay)),
        ("7 rate curves", 900, plain(rate_curves)),
        ("8 lemma invariants", 300, audited(&lemma_audit)),
        ("9 property suites", 120, plain(property_suites)),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let t = Instant::now();
        let (outcome, shared) = check();
        let elapsed = shared.unwrap_or_else(|| t.elapsed());
        let (tag, detail) = match outcome {
            Ok(d) if elapsed.as_secs() < budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {:.1}s, budget {budget}s", elapsed.as_secs_f64())),
            Err(d) => ("FAIL", d),
        };
        failed += (tag == "FAIL") as usize;
        println!("[{tag}] criterion {name} ({:.1}s): {detail}", elapsed.as_secs_f64());
    }
    println!("acceptance: {} of 9 criteria passed in {:.1}s", 9 - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
