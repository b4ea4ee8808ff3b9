//! `echo-sched`: generate traces, simulate offloading policies and compare
//! them.
//!
//! Exit status is 0 on success, 2 for bad flags or unreadable inputs and 1
//! for internal failures. Set `ECHO_SCHED_LOG` (e.g. `info`) for logging.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use echo_sched::model::Duration;
use echo_sched::policies::PolicyKind;
use echo_sched::sim::{self, SimConfig, SimError, SimReport, Summary};
use echo_sched::traceio::{self, AppCatalog, MixSpec, TraceError};

#[derive(Parser)]
#[command(name = "echo-sched", version, about = "Edge offloading scheduler and trace-driven simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic trace with exponential inter-arrival times.
    GenTraces(GenArgs),
    /// Replay a trace through one policy.
    Simulate(SimulateArgs),
    /// Replay a trace through several policies side by side.
    Compare(CompareArgs),
    /// Print the summary of a saved report.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Number of requests.
    #[arg(long)]
    n: usize,
    /// Arrival rate in requests per second.
    #[arg(long)]
    lambda: f64,
    /// Mix preset: 1 = 80% interactive, 2 = 20% interactive, 3 = even.
    #[arg(long, default_value_t = 1)]
    mix: u8,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output trace file (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    /// Application catalog replacing the built-in one (TOML).
    #[arg(long)]
    apps: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Input trace file (JSON Lines).
    #[arg(long)]
    trace: PathBuf,
    /// Number of edge VMs.
    #[arg(long)]
    vms: usize,
    /// Arrival rate the trace was generated with; recorded in reports.
    #[arg(long = "lambda-label")]
    lambda_label: Option<f64>,
    /// Seed for estimation noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Edge provisioning delay in seconds.
    #[arg(long = "provision-delay", default_value_t = 0.0)]
    provision_delay: f64,
    /// Relative estimation error in [0, 1); 0 means exact profiles.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// end-only, cloud-always, thinkair, mcloud or echo.
    #[arg(long)]
    policy: PolicyKind,
    /// Output stem; writes STEM.json and STEM.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',', default_value = "end-only,cloud-always,thinkair,mcloud,echo")]
    policies: Vec<PolicyKind>,
    /// Output directory for per-policy reports and comparison.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Report JSON written by `simulate` or `compare`.
    #[arg(long)]
    input: PathBuf,
    /// Print the per-task CSV instead of the summary.
    #[arg(long)]
    csv: bool,
}

enum Failure {
    Usage(String),
    Internal(String),
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Model(_) => Failure::Usage(e.to_string()),
            other => Failure::Internal(other.to_string()),
        }
    }
}

fn create(path: &Path) -> Result<File, Failure> {
    File::create(path).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn gen_traces(a: GenArgs) -> Result<(), Failure> {
    let catalog = match &a.apps {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            AppCatalog::from_toml(&text)?
        }
        None => AppCatalog::builtin(),
    };
    let mix = MixSpec::preset(a.mix, &catalog)?;
    let trace = traceio::generate(a.n, a.lambda, &mix, a.seed, &catalog)?;
    traceio::write_to(&trace, create(&a.out)?)?;
    log::info!("wrote {} tasks to {}", trace.tasks.len(), a.out.display());
    emit(&format!("wrote {} tasks to {}\n", trace.tasks.len(), a.out.display()));
    Ok(())
}

fn load_trace(path: &Path) -> Result<Vec<echo_sched::model::Task>, Failure> {
    let trace = traceio::load(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    for w in trace.validate().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))? {
        log::warn!("{w}");
    }
    Ok(trace.tasks)
}

fn config(r: &RunArgs) -> Result<SimConfig, Failure> {
    let provision_delay = Duration::from_secs_f64(r.provision_delay)
        .map_err(|e| Failure::Usage(format!("--provision-delay: {e}")))?;
    Ok(SimConfig {
        num_vms: r.vms,
        lambda: r.lambda_label,
        seed: r.seed,
        provision_delay,
        noise: r.noise,
        ..SimConfig::default()
    })
}

fn write_report(report: &SimReport, stem: &Path) -> Result<(), Failure> {
    let json = stem.with_extension("json");
    let csv = stem.with_extension("csv");
    report.write_json(create(&json)?)?;
    report.write_csv(create(&csv)?)?;
    log::info!("wrote {} and {}", json.display(), csv.display());
    Ok(())
}

/// Writes to stdout, ignoring a closed pipe (e.g. `| head`).
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn summary_text(policy: &str, s: &Summary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "policy              {policy}");
    let _ = writeln!(t, "tasks               {}", s.tasks);
    let _ = writeln!(t, "mean completion     {:.6} s", s.mean_completion);
    let _ = writeln!(t, "median completion   {:.6} s", s.median_completion);
    let _ = writeln!(t, "p95 completion      {:.6} s", s.p95_completion);
    let _ = writeln!(t, "deadline compliance {:.6} ({} judged)", s.deadline_compliance, s.deadline_tasks);
    let _ = writeln!(t, "platforms           mobile {} / edge {} / cloud {}", s.platforms.mobile, s.platforms.edge, s.platforms.cloud);
    let _ = writeln!(t, "bytes up / down     {} / {}", s.bytes_up, s.bytes_down);
    let _ = writeln!(t, "backhaul bytes      {}", s.backhaul_bytes);
    let _ = writeln!(t, "energy              {:.6} J", s.energy_joules);
    t
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let trace = load_trace(&a.run.trace)?;
    let report = sim::run(&trace, a.policy, &config(&a.run)?)?;
    if let Some(stem) = &a.out {
        write_report(&report, stem)?;
    }
    emit(&summary_text(a.policy.name(), &report.summary));
    Ok(())
}

fn compare(a: CompareArgs) -> Result<(), Failure> {
    if a.policies.is_empty() {
        return Err(Failure::Usage("--policies is empty".into()));
    }
    let trace = load_trace(&a.run.trace)?;
    let cfg = config(&a.run)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::Usage(format!("{}: {e}", a.out.display())))?;

    let results: Vec<Result<SimReport, SimError>> = std::thread::scope(|s| {
        let (trace, cfg) = (&trace, &cfg);
        let handles: Vec<_> = a.policies.iter().map(|&p| s.spawn(move || sim::run(trace, p, cfg))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });

    let table = a.out.join("comparison.csv");
    let mut w = csv::Writer::from_writer(create(&table)?);
    let internal = |e: csv::Error| Failure::Internal(e.to_string());
    w.write_record([
        "policy",
        "mean_completion",
        "median_completion",
        "p95_completion",
        "deadline_compliance",
        "bytes_up",
        "bytes_down",
        "backhaul_bytes",
        "energy_joules",
        "mobile",
        "edge",
        "cloud",
    ])
    .map_err(internal)?;
    let mut table_text = String::new();
    let _ = writeln!(table_text, "{:<14}{:>12}{:>12}{:>12}{:>14}{:>14}", "policy", "mean (s)", "p95 (s)", "compliance", "bytes up", "energy (J)");
    for (policy, result) in a.policies.iter().zip(results) {
        let report = result?;
        write_report(&report, &a.out.join(policy.name()))?;
        let s = &report.summary;
        w.write_record([
            policy.name().to_string(),
            s.mean_completion.to_string(),
            s.median_completion.to_string(),
            s.p95_completion.to_string(),
            s.deadline_compliance.to_string(),
            s.bytes_up.to_string(),
            s.bytes_down.to_string(),
            s.backhaul_bytes.to_string(),
            s.energy_joules.to_string(),
            s.platforms.mobile.to_string(),
            s.platforms.edge.to_string(),
            s.platforms.cloud.to_string(),
        ])
        .map_err(internal)?;
        let _ = writeln!(
            table_text,
            "{:<14}{:>12.3}{:>12.3}{:>12.3}{:>14}{:>14.3}",
            policy.name(),
            s.mean_completion,
            s.p95_completion,
            s.deadline_compliance,
            s.bytes_up,
            s.energy_joules
        );
    }
    w.flush().map_err(|e| Failure::Internal(e.to_string()))?;
    emit(&table_text);
    Ok(())
}

fn report(a: ReportArgs) -> Result<(), Failure> {
    let file = File::open(&a.input).map_err(|e| Failure::Usage(format!("{}: {e}", a.input.display())))?;
    let report = SimReport::read_json(file).map_err(|e| Failure::Usage(format!("{}: {e}", a.input.display())))?;
    if a.csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        emit(&String::from_utf8_lossy(&buf));
    } else {
        emit(&summary_text(&report.run.policy, &report.summary));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ECHO_SCHED_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::GenTraces(a) => gen_traces(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}
