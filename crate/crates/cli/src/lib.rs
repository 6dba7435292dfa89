//! Command-line front end: topology generation, single-scenario analysis,
//! simulation and Monte Carlo sweeps.

use std::ffi::OsString;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use byzcast_core::experiments::{self, baseline_rows, genuine_information, write_csv, UnsafePolicy};
use byzcast_core::simulator::default_max_steps;
use byzcast_core::{
    check_safety, load_topology, reliable_closure, run, save_topology, Adversary, ExperimentConfig,
    Information, NodeId, Scenario, ScenarioError, Setting, TopologyKind,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

mod svg;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "byzcast", version, about = "Byzantine-tolerant multihop broadcast toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a grid or torus topology file.
    Topo(TopoArgs),
    /// Safety report and reliable node set for one scenario.
    Analyze(AnalyzeArgs),
    /// Run the protocol on one scenario and write the delivery trace.
    Simulate(SimulateArgs),
    /// Monte Carlo sweep over Byzantine rates, written as CSV.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Kind {
    Grid,
    Torus,
}

impl From<Kind> for TopologyKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Grid => TopologyKind::Grid,
            Kind::Torus => TopologyKind::Torus,
        }
    }
}

#[derive(Debug, Args)]
pub struct TopoArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long)]
    pub size: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub topology: PathBuf,
    /// Comma-separated bounds, e.g. 1,3,3.
    #[arg(long)]
    pub setting: Setting,
    #[arg(long)]
    pub source: u32,
    /// Comma-separated Byzantine node ids.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub byzantine: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Print only the reliable node set; an unsafe scenario is an error.
    #[arg(long)]
    pub reliable_only: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AdversaryKind {
    Silent,
    Forge,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_enum)]
    pub adversary: AdversaryKind,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Baseline {
    Unsecured,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long)]
    pub size: usize,
    #[arg(long)]
    pub setting: Setting,
    /// Comma-separated Byzantine rates in [0, 1).
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambda: Vec<f64>,
    #[arg(long)]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Drop unsafe trials from the delivery estimate instead of counting
    /// them as failures.
    #[arg(long)]
    pub exclude_unsafe: bool,
    /// Worker threads; output does not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Also draw p_deliver against lambda (log scale) as SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// The generic forged value used by the forging adversary.
pub fn forged_information() -> Information {
    Information::new("m'")
}

fn emit(out: Option<&FsPath>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(&args.topology)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", args.topology.display())))?;
    let topology = load_topology(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.topology.display())))?;
    Scenario::new(
        Arc::new(topology),
        NodeId(args.source),
        args.byzantine.iter().copied().map(NodeId),
        genuine_information(),
    )
    .map_err(|e| match e {
        ScenarioError::ByzantineSource(_) | ScenarioError::UnknownNode(_) => CliError::Usage(e.to_string()),
    })
}

/// Parses `args` (program name first) and executes the command.
pub fn run_cli<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("usage error").to_owned();
            return Err(CliError::Usage(line));
        }
    };
    execute(cli.command)
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Topo(args) => {
            let topology = TopologyKind::from(args.kind)
                .build(args.size)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            emit(args.out.as_deref(), &save_topology(&topology))
        }
        Command::Analyze(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let setting = &args.scenario.setting;
            let report = check_safety(&scenario, setting);
            let mut text = String::new();
            if args.reliable_only {
                if let Some(w) = report.violations.first() {
                    return Err(CliError::Runtime(format!(
                        "scenario is unsafe (node {} is critical)",
                        w.focal
                    )));
                }
            } else {
                text.push_str(&report.to_text());
            }
            if report.safe {
                text.push_str(&reliable_closure(&scenario, setting, None).to_text());
            }
            emit(args.out.as_deref(), &text)
        }
        Command::Simulate(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let setting = &args.scenario.setting;
            let adversary = match args.adversary {
                AdversaryKind::Silent => Adversary::Silent,
                AdversaryKind::Forge => Adversary::Forge(forged_information()),
            };
            let max_steps = args
                .max_steps
                .unwrap_or_else(|| default_max_steps(scenario.topology(), setting));
            let trace = run(&scenario, setting, &adversary, args.seed, max_steps).map_err(runtime)?;
            emit(args.out.as_deref(), &trace.to_text())
        }
        Command::Montecarlo(args) => montecarlo(args),
    }
}

fn montecarlo(args: MonteCarloArgs) -> Result<(), CliError> {
    let mut config = ExperimentConfig::new(
        args.kind.into(),
        args.size,
        args.setting.clone(),
        args.lambda.clone(),
        args.trials,
        args.seed,
    );
    config.confidence = args.confidence;
    if args.exclude_unsafe {
        config.unsafe_policy = UnsafePolicy::Exclude;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    config
        .kind
        .build(config.size)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let mut rows = match args.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".to_owned())),
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(runtime)?
            .install(|| experiments::run_sweep(&config)),
        None => experiments::run_sweep(&config),
    }
    .map_err(runtime)?;
    if matches!(args.baseline, Some(Baseline::Unsecured)) {
        rows.extend(baseline_rows(&config));
    }
    emit(Some(&args.out), &write_csv(&rows).map_err(runtime)?)?;
    if let Some(path) = &args.svg {
        emit(Some(path), &svg::delivery_chart(&rows))?;
    }
    Ok(())
}
