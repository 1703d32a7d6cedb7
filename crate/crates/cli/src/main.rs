//! Command-line front end: estimation, design optimization, efficiency
//! reporting, Monte Carlo validation and benchmark-table reproduction.
//!
//! Exit codes: 0 on success, 1 on numeric or search failures, 2 on
//! configuration errors.

mod commands;
mod config;
mod output;
mod reproduce;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{parse_json, ObjectiveSpec, OutputFormat, PsoSpec, RunConfig, SimulatePlanConfig};

/// Errors split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Configuration problems (exit code 2).
    Config(String),
    /// Numeric, search or simulation failures (exit code 1).
    Numeric(String),
}

impl CliError {
    fn config(e: blue_design::Error) -> Self {
        CliError::Config(e.to_string())
    }

    fn numeric(e: blue_design::Error) -> Self {
        match e {
            blue_design::Error::InvalidInput(_)
            | blue_design::Error::InvalidBasis(_)
            | blue_design::Error::InvalidInterval(_) => CliError::Config(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }

    fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Numeric(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "blue-design",
    about = "Best linear unbiased estimation and optimal designs for regression with correlated errors",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format override.
    #[arg(long, value_enum)]
    format: Option<CliFormat>,
    /// Number of design points override.
    #[arg(long)]
    n: Option<usize>,
    /// Random seed override for search and simulation.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Design criterion.
    #[arg(long, value_enum)]
    objective: Option<CliObjective>,
    /// Swarm size override.
    #[arg(long)]
    swarm: Option<usize>,
    /// Iteration count override.
    #[arg(long)]
    iters: Option<usize>,
    /// Restart count override.
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliObjective {
    MseStar,
    Wlse,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Json,
    Csv,
    Table,
}

impl From<CliFormat> for OutputFormat {
    fn from(f: CliFormat) -> Self {
        match f {
            CliFormat::Json => OutputFormat::Json,
            CliFormat::Csv => OutputFormat::Csv,
            CliFormat::Table => OutputFormat::Table,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TableChoice {
    Table1,
    Table2,
    Table3,
}

#[derive(Subcommand)]
enum Command {
    /// Continuous-time estimator: C, its inverse and degenerate-case report.
    Blue(CommonArgs),
    /// Optimal increment weights at a fixed design.
    Weights(CommonArgs),
    /// Optimize the design points by particle swarm search.
    Design {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Efficiencies of both estimators at a fixed design.
    Efficiency(CommonArgs),
    /// Monte Carlo validation of the variance formulas.
    Simulate(CommonArgs),
    /// Recompute a benchmark table and diff against the published values.
    Reproduce {
        /// Which table to regenerate.
        #[arg(value_enum)]
        which: TableChoice,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format.
        #[arg(long, value_enum)]
        format: Option<CliFormat>,
        /// Random seed for the design searches.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_run_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut cfg: RunConfig = parse_json(&text, "run config")?;
    if let Some(n) = args.n {
        cfg.n = Some(n);
    }
    if let Some(seed) = args.seed {
        let mut pso = cfg.pso.unwrap_or_default();
        pso.seed = Some(seed);
        cfg.pso = Some(pso);
    }
    if let Some(f) = args.format {
        cfg.output = Some(f.into());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Blue(args) => {
            let cfg = load_run_config(&args)?;
            commands::cmd_blue(&cfg, args.out.as_deref())
        }
        Command::Weights(args) => {
            let cfg = load_run_config(&args)?;
            commands::cmd_weights(&cfg, args.out.as_deref())
        }
        Command::Design { common, search } => {
            let mut cfg = load_run_config(&common)?;
            if let Some(objective) = search.objective {
                cfg.objective = Some(match objective {
                    CliObjective::MseStar => ObjectiveSpec::MseStar,
                    CliObjective::Wlse => ObjectiveSpec::Wlse,
                });
            }
            let mut pso: PsoSpec = cfg.pso.unwrap_or_default();
            if let Some(v) = search.swarm {
                pso.swarm = Some(v);
            }
            if let Some(v) = search.iters {
                pso.iters = Some(v);
            }
            if let Some(v) = search.restarts {
                pso.restarts = Some(v);
            }
            cfg.pso = Some(pso);
            commands::cmd_design(&cfg, common.out.as_deref())
        }
        Command::Efficiency(args) => {
            let cfg = load_run_config(&args)?;
            commands::cmd_efficiency(&cfg, args.out.as_deref())
        }
        Command::Simulate(args) => {
            let text = std::fs::read_to_string(&args.config).map_err(|e| {
                CliError::Config(format!("cannot read {}: {e}", args.config.display()))
            })?;
            let mut cfg: SimulatePlanConfig = parse_json(&text, "simulation plan")?;
            if let Some(n) = args.n {
                cfg.n = Some(n);
            }
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            commands::cmd_simulate(&cfg, args.out.as_deref())
        }
        Command::Reproduce {
            which,
            out,
            format,
            seed,
        } => {
            let which = match which {
                TableChoice::Table1 => reproduce::Which::Table1,
                TableChoice::Table2 => reproduce::Which::Table2,
                TableChoice::Table3 => reproduce::Which::Table3,
            };
            let format = format.map(OutputFormat::from).unwrap_or_default();
            reproduce::cmd_reproduce(which, seed, format, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
