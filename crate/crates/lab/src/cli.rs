//! `lca-lab` command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lca_core::analysis::{prepare_scan, report_from_scan, rip_sampled_lower_bound, rip_scan_gram, ScanResult, ENUMERATION_CAP};
use lca_core::dynamics::ThresholdSchedule;
use lca_core::ensemble::{trial_rng, AmplitudeMode, Ensemble};
use lca_core::oracle::{check_optimality, objective};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{BackendChoice, ExperimentConfig, ExperimentKind};
use crate::error::{LabError, LabResult};
use crate::experiments::{run_and_write, Draw, RunSpec};
use crate::formats;

#[derive(Debug, Parser)]
#[command(name = "lca-lab", version, about = "Run LCA sparse-recovery experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON file layered over the experiment defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` (dotted keys reach nested sections); repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (defaults to the configured `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CliBackend {
    Fixed,
    Switched,
}

impl From<CliBackend> for BackendChoice {
    fn from(b: CliBackend) -> Self {
        match b {
            CliBackend::Fixed => BackendChoice::Fixed,
            CliBackend::Switched => BackendChoice::Switched,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fraction of trials whose active set stays inside the optimal support.
    SupportContainment(ExperimentArgs),
    /// Mean and maximum largest-active-set size over the sparsity.
    ActiveRatioHeatmap(ExperimentArgs),
    /// Fixed high, fixed low and decaying threshold on the same problems.
    ThresholdDecay(ExperimentArgs),
    /// Mean normalized error curves with exponential overlays.
    RateCurves(ExperimentArgs),
    /// Theorem and lemma conditions against simulated trajectories.
    TheoremAudit(ExperimentArgs),
    /// RIP constant of a matrix stored as CSV.
    Rip {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        order: usize,
        /// Report a lower bound from this many random supports instead.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate one stored instance and print the result as JSON.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "fixed")]
        backend: CliBackend,
        #[arg(long, default_value_t = 15.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        #[arg(long, default_value_t = 0.1)]
        sample_dt: f64,
        /// Write the trajectory export and solution here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_states: bool,
    },
    /// Draw a random instance and store it as a JSON bundle.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the matrix as CSV.
        #[arg(long)]
        matrix_csv: Option<PathBuf>,
    },
}

fn experiment(kind: ExperimentKind, args: &ExperimentArgs, stdout: &mut dyn Write) -> LabResult<()> {
    let mut overrides = args.overrides.clone();
    if let Some(t) = args.trials {
        overrides.push(format!("trials={t}"));
    }
    if let Some(s) = args.seed {
        overrides.push(format!("seed={s}"));
    }
    let cfg = ExperimentConfig::load(kind, args.config.as_deref(), &overrides)?;
    let dir = run_and_write(&cfg, args.out.as_deref())?;
    writeln!(stdout, "{}: results in {}", kind.tag(), dir.root().display()).map_err(|e| LabError::io("<stdout>", e))
}

fn print_json(stdout: &mut dyn Write, value: &serde_json::Value) -> LabResult<()> {
    serde_json::to_writer_pretty(&mut *stdout, value)?;
    writeln!(stdout).map_err(|e| LabError::io("<stdout>", e))
}

fn rip(matrix: &PathBuf, order: usize, samples: Option<usize>, seed: u64, stdout: &mut dyn Write) -> LabResult<()> {
    let phi = formats::read_matrix_csv(matrix)?;
    let report = match samples {
        Some(k) => rip_sampled_lower_bound(&phi, order, k, &mut trial_rng(seed, 0))?,
        None => {
            let gram = prepare_scan(&phi, order, ENUMERATION_CAP)?;
            let parts: Vec<ScanResult> =
                (0..phi.ncols()).into_par_iter().map(|f| rip_scan_gram(&gram, order, Some(f))).collect();
            let scan = parts.into_iter().reduce(ScanResult::merge).expect("at least one column");
            report_from_scan(order, scan)
        }
    };
    print_json(stdout, &serde_json::to_value(report)?)
}

#[allow(clippy::too_many_arguments)]
fn solve(
    instance: &PathBuf,
    backend: BackendChoice,
    t_max: f64,
    dt: f64,
    sample_dt: f64,
    out: Option<&PathBuf>,
    dump_states: bool,
    stdout: &mut dyn Write,
) -> LabResult<()> {
    let inst = formats::load_instance(instance)?;
    if !(t_max > 0.0 && dt > 0.0 && sample_dt > 0.0) {
        return Err(LabError::config("t_max, dt and sample_dt must be positive"));
    }
    let spec = RunSpec { backend, t_max, dt, output_times: lca_core::dynamics::OutputTimes::Uniform(sample_dt) };
    let traj = spec.simulate(&inst, None)?;
    let fin = &traj.final_state;
    let kkt = check_optimality(&fin.a, inst.phi(), inst.y(), fin.lambda, 0.0);
    if let Some(dir) = out {
        formats::write_trajectory(dir, "trajectory", &traj, &inst, dump_states)?;
        formats::write_vector_csv(&dir.join("solution.csv"), &fin.a)?;
    }
    print_json(
        stdout,
        &json!({
            "backend": traj.backend.tag(),
            "converged": traj.converged,
            "final_time": fin.t,
            "lambda": fin.lambda,
            "q_obs": traj.max_active,
            "switches": traj.switch_count(),
            "active_set": fin.active_set,
            "objective": objective(&fin.a, inst.phi(), inst.y(), fin.lambda),
            "kkt_residual": kkt.max_violation,
            "solution": fin.a.iter().collect::<Vec<_>>(),
        }),
    )
}

#[allow(clippy::too_many_arguments)]
fn generate(
    n: usize,
    m: usize,
    s: usize,
    sigma: f64,
    lambda: f64,
    seed: u64,
    out: &PathBuf,
    matrix_csv: Option<&PathBuf>,
    stdout: &mut dyn Write,
) -> LabResult<()> {
    let draw = Draw { n, m, s, sigma, ensemble: Ensemble::GaussianUnitCol, amplitude: AmplitudeMode::EqualMagnitude };
    ThresholdSchedule::constant(lambda).map_err(|e| LabError::config(e.to_string()))?;
    let inst = draw.sample(lambda, &mut trial_rng(seed, 0)).map_err(|e| LabError::config(e.to_string()))?;
    formats::save_instance(out, &inst, Some(seed))?;
    if let Some(p) = matrix_csv {
        formats::write_matrix_csv(p, inst.phi())?;
    }
    writeln!(stdout, "instance written to {}", out.display()).map_err(|e| LabError::io("<stdout>", e))
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> LabResult<()> {
    let kind_args = match &cli.command {
        Command::SupportContainment(a) => Some((ExperimentKind::SupportContainment, a)),
        Command::ActiveRatioHeatmap(a) => Some((ExperimentKind::ActiveRatioHeatmap, a)),
        Command::ThresholdDecay(a) => Some((ExperimentKind::ThresholdDecay, a)),
        Command::RateCurves(a) => Some((ExperimentKind::RateCurves, a)),
        Command::TheoremAudit(a) => Some((ExperimentKind::TheoremAudit, a)),
        _ => None,
    };
    if let Some((kind, args)) = kind_args {
        return experiment(kind, args, stdout);
    }
    match cli.command {
        Command::Rip { matrix, order, samples, seed } => rip(&matrix, order, samples, seed, stdout),
        Command::Solve { instance, backend, t_max, dt, sample_dt, out, dump_states } => {
            solve(&instance, backend.into(), t_max, dt, sample_dt, out.as_ref(), dump_states, stdout)
        }
        Command::Generate { n, m, s, sigma, lambda, seed, out, matrix_csv } => {
            generate(n, m, s, sigma, lambda, seed, &out, matrix_csv.as_ref(), stdout)
        }
        _ => unreachable!("experiments handled above"),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
