use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use dosctrl_core::certify::{build_cert, delta_bound_sup, sigma_max, static_bound, LyapCert, RobustnessReport};
use dosctrl_core::control::ControllerKind;
use dosctrl_core::dos::{dos_free_deadline, DosBudget, DosSignal, Normalization};
use dosctrl_core::matkit::Mat;
use dosctrl_core::network::resolve_attempts;
use dosctrl_core::scenario::{averaged, DosSpec, Scenario};
use dosctrl_core::sim::{self, Metrics, SimTrace};
use dosctrl_core::Bound;

#[derive(Parser)]
#[command(name = "dosctrl", version, about = "Networked control under time-constrained DoS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the stability certificates of a scenario.
    Certify(RunArgs),
    /// Simulate a scenario and write its trace and metrics.
    Simulate(RunArgs),
    /// Fit the minimal (η, κ) of an `h,tau` CSV for given (τ_D, T).
    DosFit(FitArgs),
    /// Run the embedded double-integrator experiment for all controllers.
    ReproduceIv(ReproArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the noise and jammer seeds.
    #[arg(long, env = "DOSCTRL_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FitArgs {
    /// DoS interval CSV with header `h,tau`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "tau-d")]
    tau_d: Bound,
    #[arg(long = "t")]
    t: Bound,
    /// Transmission period used for the feasibility check.
    #[arg(long)]
    delta: Option<f64>,
    /// Fitting horizon; defaults to the end of the last interval.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ReproArgs {
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Certify(args) => certify(&args),
        Command::Simulate(args) => simulate(&args).map(|_| ExitCode::SUCCESS),
        Command::DosFit(args) => dos_fit(&args).map(|_| ExitCode::SUCCESS),
        Command::ReproduceIv(args) => reproduce(&args).map(|_| ExitCode::SUCCESS),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}

fn load(args: &RunArgs) -> Result<(Scenario, DosSignal)> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut scenario = Scenario::from_json(&text)?;
    if let Some(seed) = args.common.seed {
        scenario = scenario.with_seed(seed);
    }
    let base = args.config.parent();
    let (sig, norm) = scenario.signal(base)?;
    warn_normalized(&norm);
    Ok((scenario, sig))
}

fn warn_normalized(norm: &Normalization) {
    if norm.reordered {
        eprintln!("warning: DoS intervals were not sorted; reordered");
    }
    if norm.merged > 0 {
        eprintln!("warning: merged {} overlapping DoS intervals", norm.merged);
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(path)
}

/// Writes the trace CSV and returns its SHA-256 digest.
fn write_trace(dir: &Path, name: &str, trace: &SimTrace) -> Result<String> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    let path = dir.join(name);
    fs::write(&path, &buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&buf)))
}

fn certify(args: &RunArgs) -> Result<ExitCode> {
    let (scenario, sig) = load(args)?;
    let report = scenario.report(&sig)?;
    let path = write_json(&args.common.out, &scenario.outputs.report, &report)?;
    println!("{}", path.display());
    Ok(if report.certified {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[derive(Serialize)]
struct SimOutput {
    seed: u64,
    trace_digest: String,
    sup_x_after_5: f64,
    #[serde(flatten)]
    metrics: Metrics,
}

fn run_scenario(scenario: &Scenario, sig: &DosSignal) -> Result<SimTrace> {
    Ok(sim::run(
        &scenario.plant()?,
        &scenario.gain()?,
        &scenario.schedule()?,
        sig,
        &scenario.noise,
        &scenario.sim_config(),
    )?)
}

fn sup_after(trace: &SimTrace, t0: f64) -> f64 {
    trace
        .rows
        .iter()
        .filter(|r| r.t >= t0)
        .map(|r| r.x.norm())
        .fold(0.0, f64::max)
}

fn simulate(args: &RunArgs) -> Result<()> {
    let (scenario, sig) = load(args)?;
    let trace = run_scenario(&scenario, &sig)?;
    let digest = write_trace(&args.common.out, &scenario.outputs.trace, &trace)?;
    let out = SimOutput {
        seed: scenario.noise.seed,
        trace_digest: digest,
        sup_x_after_5: sup_after(&trace, 5.0),
        metrics: sim::metrics(&trace, &sig, scenario.sim.t_end)?,
    };
    if let Some(t) = trace.aborted_at {
        eprintln!("note: run aborted at the divergence limit at t = {t}");
    }
    let path = write_json(&args.common.out, &scenario.outputs.metrics, &out)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct FitOutput {
    intervals: usize,
    horizon: f64,
    reordered: bool,
    merged: usize,
    budget: DosBudget,
    delta: Option<f64>,
    main_lhs: Option<f64>,
    feasible: Option<bool>,
    q_deadline: Option<f64>,
}

fn dos_fit(args: &FitArgs) -> Result<()> {
    let f = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let (sig, norm) = DosSignal::read_csv(f)?;
    warn_normalized(&norm);
    let horizon = args.horizon.unwrap_or_else(|| sig.extent());
    let fit = sig.fit_budget(args.tau_d, args.t, horizon)?;
    let budget = DosBudget::new(fit.eta, args.tau_d, fit.kappa, args.t)?;
    let q_deadline = args.delta.and_then(|d| dos_free_deadline(&budget, d).ok());
    let out = FitOutput {
        intervals: sig.len(),
        horizon,
        reordered: norm.reordered,
        merged: norm.merged,
        budget,
        delta: args.delta,
        main_lhs: args.delta.map(|d| budget.main_lhs(d)),
        feasible: args.delta.map(|d| budget.main_lhs(d) < 1.0),
        q_deadline,
    };
    let path = write_json(&args.out, "budget.json", &out)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct Constants {
    gamma1: f64,
    gamma2: f64,
    alpha1: f64,
    alpha2: f64,
    phi_norm: f64,
    mu_a: f64,
    sigma_max: Bound,
    delta_bound: f64,
    sigma_static: f64,
    static_bound: f64,
    main_lhs_nominal: f64,
}

impl Constants {
    fn new(cert: &LyapCert, delta: f64) -> Result<Self> {
        let (sigma_static, bound) = static_bound(cert, delta)?;
        let nominal = DosBudget::new(0.0, Bound::Finite(0.96), 0.0, Bound::Finite(1.29))?;
        Ok(Self {
            gamma1: cert.gamma1,
            gamma2: cert.gamma2,
            alpha1: cert.alpha1,
            alpha2: cert.alpha2,
            phi_norm: cert.phi_norm,
            mu_a: cert.mu_a,
            sigma_max: sigma_max(cert),
            delta_bound: delta_bound_sup(cert),
            sigma_static,
            static_bound: bound,
            main_lhs_nominal: nominal.main_lhs(delta),
        })
    }
}

#[derive(Serialize)]
struct DosSummary {
    seed: Option<u64>,
    transitions: usize,
    dos_time: f64,
    tau_d_avg: Bound,
    t_avg: Bound,
    main_lhs_avg: f64,
    failure_rate: f64,
}

#[derive(Serialize)]
struct ControllerRun {
    trace: String,
    trace_digest: String,
    sup_x_after_5: f64,
    report: RobustnessReport,
    metrics: Metrics,
}

#[derive(Serialize)]
struct Summary {
    constants: Constants,
    dos: DosSummary,
    runs: Vec<ControllerRun>,
}

fn reproduce(args: &ReproArgs) -> Result<()> {
    let kinds = [
        ControllerKind::Static,
        ControllerKind::Analog,
        ControllerKind::Digital { b: 10 },
    ];
    let seeded = |kind| {
        let s = Scenario::reference(kind);
        match args.common.seed {
            Some(seed) => s.with_seed(seed),
            None => s,
        }
    };
    let base = seeded(ControllerKind::Analog);
    let (sig, _) = base.signal(None)?;
    let horizon = base.sim.t_end;
    let cert = build_cert(&base.plant()?, &base.gain()?, &Mat::identity(2, 2))?;
    let log = resolve_attempts(&base.schedule()?, &sig, horizon);
    let (tau_d_avg, t_avg) = averaged(&sig, horizon)?;

    let mut runs = Vec::new();
    for kind in kinds {
        let scenario = seeded(kind);
        let trace = run_scenario(&scenario, &sig)?;
        let name = format!("trace_{}.csv", kind.name());
        let digest = write_trace(&args.common.out, &name, &trace)?;
        runs.push(ControllerRun {
            trace: name,
            trace_digest: digest,
            sup_x_after_5: sup_after(&trace, 5.0),
            report: scenario.report(&sig)?,
            metrics: sim::metrics(&trace, &sig, horizon)?,
        });
    }
    let summary = Summary {
        constants: Constants::new(&cert, base.delta)?,
        dos: DosSummary {
            seed: match base.dos {
                DosSpec::RandomPwm { seed, .. } => Some(seed),
                _ => None,
            },
            transitions: sig.count_transitions(0.0, horizon)?,
            dos_time: sig.dos_measure(0.0, horizon)?,
            tau_d_avg,
            t_avg,
            main_lhs_avg: t_avg.recip() + tau_d_avg.ratio(base.delta),
            failure_rate: log.failure_rate(),
        },
        runs,
    };
    let path = write_json(&args.common.out, "summary.json", &summary)?;
    println!("{}", path.display());
    Ok(())
}
