//! `rbstc`: analysis, simulation and τ_e export for region-based
//! self-triggered control configurations.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rbstc::analysis::{analyze_partition, AnalysisOptions};
use rbstc::gamma::{detect_steady_state, simulate, SteadyState, DEFAULT_MAX_PERIOD, DEFAULT_WINDOW};
use rbstc::numkit::Vector;
use rbstc::periodic::{analyze_periodic, PeriodicOptions};
use rbstc::regions::{calibrate_sigma, estimate_tau_bounds, tau_e_field, RelativeTrigger, SigmaCalibration, TauBounds};
use rbstc::stability::ProbeConfig;
use rbstc::system::check_assumption_a1;

use config::{AnalysisConfig, PeriodicSection, TriggerConfig};
use report::{to_json, AnalysisReport, PartitionReport, SystemReport, TriggerReport};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("{0}")]
    Failure(String),
}

impl From<rbstc::Error> for CliError {
    fn from(e: rbstc::Error) -> Self {
        match e {
            rbstc::Error::AssumptionViolation { .. } => CliError::Assumption(e.to_string()),
            rbstc::Error::InvalidArgument(_) => CliError::Config(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Assumption(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "rbstc", version, about = "Inter-event time analysis for region-based self-triggered control")]
struct Cli {
    /// Worker threads for parallel sampling and screening.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full invariance and stability report as JSON.
    Analyze(AnalyzeArgs),
    /// Event-by-event simulation from an initial state.
    Simulate(SimulateArgs),
    /// τ_e sampled over the unit sphere.
    TauE(TauEArgs),
    /// Fit σ so the sampled τ_min matches a target.
    CalibrateSigma(CalibrateArgs),
    /// `analyze` with periodic-pattern enumeration switched on.
    Periodic(PeriodicArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the perturbation probe on every verified candidate.
    #[arg(long)]
    probe: bool,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x0: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    events: usize,
    /// CSV trace; the JSON trace is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TauEArgs {
    config: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    config: PathBuf,
    #[arg(long)]
    target_tmin: f64,
    #[arg(long)]
    target_tmax: f64,
    #[arg(long, default_value_t = 1e-4)]
    sigma_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma_hi: f64,
    #[arg(long, default_value_t = 4000)]
    samples: usize,
}

#[derive(Args)]
struct PeriodicArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_period: Option<usize>,
    /// Analyze every primitive pattern up to this length.
    #[arg(long)]
    exhaustive: Option<usize>,
    #[arg(long)]
    harvest_runs: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn run(cmd: Command) -> Result<u8, CliError> {
    match cmd {
        Command::Analyze(a) => {
            let cfg = load(&a.config)?;
            let periodic = cfg.analysis.periodic.as_ref().map(PeriodicSection::options);
            analyze(&cfg, a.probe, periodic, a.out.as_deref())
        }
        Command::Periodic(a) => {
            let cfg = load(&a.config)?;
            let mut popts = cfg.analysis.periodic.as_ref().map(PeriodicSection::options).unwrap_or_default();
            if let Some(m) = a.max_period {
                popts.max_period = m;
            }
            if a.exhaustive.is_some() {
                popts.exhaustive_length = a.exhaustive;
            }
            if let Some(h) = a.harvest_runs {
                popts.harvest_runs = h;
            }
            analyze(&cfg, false, Some(popts), a.out.as_deref())
        }
        Command::Simulate(a) => simulate_cmd(&a),
        Command::TauE(a) => tau_e_cmd(&a),
        Command::CalibrateSigma(a) => calibrate_cmd(&a),
    }
}

fn load(path: &Path) -> Result<AnalysisConfig, CliError> {
    let mut cfg = config::load(path)?;
    if let Ok(s) = std::env::var("RBSTC_SEED") {
        cfg.seed = s.trim().parse().map_err(|_| CliError::Config(format!("RBSTC_SEED: `{s}` is not an unsigned integer")))?;
    }
    Ok(cfg)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Failure(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn analyze(cfg: &AnalysisConfig, probe: bool, periodic: Option<PeriodicOptions>, out: Option<&Path>) -> Result<u8, CliError> {
    let tol = cfg.tolerances;
    let setup = cfg.setup()?;
    let sec = &cfg.analysis;
    if let Ok(h) = setup.system.hurwitz_check(&tol) {
        if !h.is_hurwitz {
            log::warn!("A + BK is not Hurwitz (largest real part {:.3e}); continuing", h.max_real_part);
        }
    }
    let opts = AnalysisOptions {
        pirs: sec.pirs,
        subspaces: sec.subspaces,
        unions: sec.unions,
        screening: sec.screening,
        stability: sec.stability,
        probe: (probe || sec.probe).then(ProbeConfig::default),
        samples: sec.samples.unwrap_or(AnalysisOptions::default().samples),
        seed: cfg.seed,
        ..AnalysisOptions::default()
    };
    let a1 = check_assumption_a1(&setup.partition, &setup.gs, &tol, sec.a1_samples.unwrap_or(64), cfg.seed)?;
    let regions = analyze_partition(&setup.partition, &setup.gs, &opts, &tol)?;
    let periodic = match periodic {
        Some(p) => Some(analyze_periodic(&setup.partition, &setup.gs, &p, &opts, &tol)?),
        None => None,
    };
    let trigger = match (&cfg.trigger, &setup.trigger) {
        (Some(TriggerConfig::Relative { sigma, horizon, .. }), Some(_)) => {
            Some(TriggerReport { kind: "relative", sigma: *sigma, horizon: *horizon, bounds: setup.bounds })
        }
        _ => None,
    };
    let passed = a1.passed;
    if !passed {
        log::error!("assumption A1 fails: {} violation(s), {} duplicate τ pair(s)", a1.violations.len(), a1.duplicate_taus.len());
    }
    let report = AnalysisReport {
        format: report::FORMAT,
        seed: cfg.seed,
        tolerances: tol,
        system: SystemReport::new(&setup.system, &tol),
        trigger,
        partition: PartitionReport {
            mode: if setup.trigger.is_some() && setup.bounds.is_some() { "tau-slices" } else { "cones" },
            dimension: setup.partition.dim(),
            regions: setup.partition.regions(),
        },
        assumption_a1: a1,
        regions,
        periodic,
    };
    emit(&to_json(&report), out)?;
    Ok(if passed { 0 } else { 2 })
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    events: usize,
    steady_state: &'a SteadyState,
    trace: &'a rbstc::gamma::IETTrace,
}

fn simulate_cmd(a: &SimulateArgs) -> Result<u8, CliError> {
    let cfg = load(&a.config)?;
    let setup = cfg.setup()?;
    let x0 = Vector::from_column_slice(&a.x0);
    if x0.len() != setup.partition.dim() {
        return Err(CliError::Config(format!("--x0 has {} entries, the system has {} states", x0.len(), setup.partition.dim())));
    }
    if !(x0.norm() > 0.0) {
        return Err(CliError::Config("--x0 must be nonzero".into()));
    }
    let trace = simulate(&setup.partition, &setup.gs, &x0, a.events, &cfg.tolerances)?;
    let steady = detect_steady_state(&trace, &setup.partition.taus(), DEFAULT_WINDOW.min(a.events), DEFAULT_MAX_PERIOD);
    if let Some(path) = &a.out {
        write_trace_csv(path, &trace)?;
        let summary = SimulationSummary { events: a.events, steady_state: &steady, trace: &trace };
        emit(&to_json(&summary), Some(&path.with_extension("json")))?;
    }
    println!("{}", to_json(&steady).trim_end());
    Ok(0)
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(format!("CSV output: {e}"))
}

fn write_trace_csv(path: &Path, trace: &rbstc::gamma::IETTrace) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let n = trace.normalized_states.first().map_or(0, Vec::len);
    let mut header = vec!["k".to_string(), "event_time".into(), "region".into(), "iet".into(), "log_norm".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..trace.normalized_states.len() {
        let mut rec = vec![k.to_string(), trace.event_times[k].to_string()];
        match (trace.region_indices.get(k), trace.iets.get(k)) {
            (Some(r), Some(t)) => {
                rec.push(r.to_string());
                rec.push(t.to_string());
            }
            _ => rec.extend([String::new(), String::new()]),
        }
        rec.push(trace.log_norms[k].to_string());
        rec.extend(trace.normalized_states[k].iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

fn require_trigger(cfg: &AnalysisConfig) -> Result<RelativeTrigger, CliError> {
    let sys = cfg.system.build()?;
    match cfg.trigger(&sys)? {
        Some(t) => Ok((*t).clone()),
        None => Err(CliError::Config("this command needs a `trigger` section".into())),
    }
}

fn tau_e_cmd(a: &TauEArgs) -> Result<u8, CliError> {
    let cfg = load(&a.config)?;
    let trigger = require_trigger(&cfg)?;
    if a.samples == 0 {
        return Err(CliError::Config("--samples must be positive".into()));
    }
    let field = tau_e_field(&trigger, a.samples, cfg.seed)?;
    let (lo, hi) = field.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, t)| (lo.min(*t), hi.max(*t)));
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header: Vec<String> = (0..trigger.dim()).map(|i| format!("x{i}")).collect();
        header.push("tau_e".into());
        w.write_record(&header).map_err(csv_err)?;
        for (x, t) in &field {
            let mut rec: Vec<String> = x.iter().map(f64::to_string).collect();
            rec.push(t.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)?;
    }
    let summary = TauBounds { tau_min: lo, tau_max: hi, samples: a.samples };
    print!("{}", to_json(&summary));
    Ok(0)
}

#[derive(Serialize)]
struct CalibrationReport {
    calibration: SigmaCalibration,
    target_tau_max: f64,
    bounds: TauBounds,
    tau_max_relative_residual: f64,
}

fn calibrate_cmd(a: &CalibrateArgs) -> Result<u8, CliError> {
    if !(a.target_tmin > 0.0 && a.target_tmin < a.target_tmax && a.target_tmax.is_finite()) {
        return Err(CliError::Config(format!("need 0 < target-tmin < target-tmax, got {} and {}", a.target_tmin, a.target_tmax)));
    }
    let cfg = load(&a.config)?;
    let sys = cfg.system.build()?;
    let horizon = match &cfg.trigger {
        Some(TriggerConfig::Relative { horizon, .. }) => *horizon,
        None => return Err(CliError::Config("calibrate-sigma needs a `trigger` section for its horizon".into())),
    };
    let cal = calibrate_sigma(&sys, horizon, a.target_tmin, (a.sigma_lo, a.sigma_hi), a.samples, cfg.seed, &cfg.tolerances)
        .map_err(|e| CliError::Failure(format!("calibration failed: {e}")))?;
    let trigger = RelativeTrigger::new(sys, cal.sigma, horizon, &cfg.tolerances)?;
    let bounds = estimate_tau_bounds(&trigger, cfg.bound_samples(), cfg.seed)?;
    let report = CalibrationReport {
        tau_max_relative_residual: (bounds.tau_max - a.target_tmax).abs() / a.target_tmax,
        target_tau_max: a.target_tmax,
        calibration: cal,
        bounds,
    };
    print!("{}", to_json(&report));
    Ok(0)
}
