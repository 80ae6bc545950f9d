//! `lunarnet`: run, sweep, validate and re-measure lunar mesh scenarios.

mod output;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lunarnet::scenario::{compute_metrics, eva_narrative, load_scenario, run_scenario, ScenarioError, ScenarioSpec};
use lunarnet::simkernel::Trace;

/// Usage errors exit 1, bad scenarios or traces 2, anything else 3.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "lunarnet", version, about = "Deterministic simulator for cognitive lunar surface networks")]
struct Cli {
    /// Log verbosity on standard error.
    #[arg(long, value_enum, global = true, default_value_t = LogLevel::Warn)]
    log_level: LogLevel,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LogLevel {
    Off,
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl From<LogLevel> for log::LevelFilter {
    fn from(l: LogLevel) -> Self {
        match l {
            LogLevel::Off => log::LevelFilter::Off,
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its trace and metrics.
    Run(RunArgs),
    /// Run one scenario under many seeds and write a summary table.
    Sweep(SweepArgs),
    /// Check a scenario file without running it.
    Validate(ScenarioArg),
    /// Recompute the metrics report from an existing trace.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct ScenarioArg {
    /// Scenario TOML file, or `eva_incident` for the bundled scenario.
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Debug, Args)]
struct Common {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Stop the run at this many seconds instead of the scenario duration.
    #[arg(long)]
    until: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON-Lines trace output.
    #[arg(long, default_value = "out/trace.jsonl")]
    trace_out: PathBuf,
    /// JSON metrics report; a CSV twin is written beside it with a `.csv` extension.
    #[arg(long, default_value = "out/metrics.json")]
    metrics_out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Seeds as a comma list with optional inclusive ranges, e.g. `1,2,10..20`.
    #[arg(long)]
    seeds: String,
    /// Upper bound on runs in flight.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// CSV summary table, one row per seed in the order given.
    #[arg(long, default_value = "out/sweep.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Trace written by `run`.
    #[arg(long)]
    trace: PathBuf,
    /// Where to write the report; printed to standard output when absent.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
}

fn prepare(common: &Common, seed: u64) -> Result<ScenarioSpec, Failure> {
    let mut spec = load_scenario(&common.scenario.scenario)?;
    spec.seed = seed;
    if let Some(until) = common.until {
        spec.duration_s = until;
        spec.validate()?;
    }
    Ok(spec)
}

fn csv_twin(metrics_out: &Path) -> Result<PathBuf, Failure> {
    let csv = metrics_out.with_extension("csv");
    if csv == metrics_out {
        return Err(Failure::Usage("--metrics-out must not end in .csv; the CSV twin takes that name".into()));
    }
    Ok(csv)
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let csv = csv_twin(&args.metrics_out)?;
    let spec = prepare(&args.common, args.seed)?;
    log::info!("running {} with seed {} for {} s", spec.name, spec.seed, spec.duration_s);
    let out = run_scenario(&spec);
    output::write_atomic(&args.trace_out, out.trace.to_jsonl().as_bytes())?;
    output::write_atomic(&args.metrics_out, out.metrics.to_json().as_bytes())?;
    output::write_atomic(&csv, out.metrics.to_csv().as_bytes())?;
    let passed = eva_narrative(&spec, &out.trace).iter().filter(|c| c.passed).count();
    println!(
        "{} seed {}: {} records, alert latency {}, narrative {}/5",
        spec.name,
        spec.seed,
        out.trace.records().len(),
        out.metrics.alert_e2e_latency_s.map_or("none".into(), |s| format!("{s:.6} s")),
        passed,
    );
    Ok(())
}

fn validate(args: &ScenarioArg) -> Result<(), Failure> {
    let spec = load_scenario(&args.scenario)?;
    spec.contact_plan()?;
    println!("ok: {} ({} nodes, {} events, {} s)", spec.name, spec.nodes.len(), spec.events.len(), spec.duration_s);
    Ok(())
}

fn metrics(args: &MetricsArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.trace)
        .map_err(|e| Failure::Invalid(format!("{}: {e}", args.trace.display())))?;
    let trace = Trace::from_jsonl(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", args.trace.display())))?;
    let report = compute_metrics(&trace).map_err(|e| Failure::Invalid(format!("{}: {e}", args.trace.display())))?;
    match &args.metrics_out {
        Some(path) => {
            let csv = csv_twin(path)?;
            output::write_atomic(path, report.to_json().as_bytes())?;
            output::write_atomic(&csv, report.to_csv().as_bytes())?;
        }
        None => print!("{}", report.to_json()),
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep::sweep(a),
        Command::Validate(a) => validate(a),
        Command::Metrics(a) => metrics(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level.into()).format_timestamp(None).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lunarnet: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
