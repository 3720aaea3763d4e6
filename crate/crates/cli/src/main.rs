//! Command-line front end: analyze, sweep, synthesize, optimize, simulate.
//!
//! Exit codes: 0 success (including "infeasible" answers), 1 usage or
//! config-parse errors, 2 instability, 3 truncation-cap problems, 4
//! simulation event-budget overflow.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crn_queues_cli::commands;
use crn_queues_cli::config::RunConfig;
use crn_queues_cli::output::OutDir;

#[derive(Parser)]
#[command(
    name = "crn-queues",
    version,
    about = "Two-class multi-server priority-queue analytics and simulation \
             for multi-channel cognitive radio networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out_dir` (default ".")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override for simulation
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the simulation columns of a sweep
    #[arg(long)]
    no_sim: bool,
    /// Also write the event log of replication 0 (simulate only)
    #[arg(long)]
    emit_event_log: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the queue-length chain and report delays from every route
    Analyze(CommonArgs),
    /// Sweep the primary load and tabulate law/chain/simulation delays
    Sweep(CommonArgs),
    /// Decide whether waiting-time thresholds are achievable
    Synthesize(CommonArgs),
    /// Minimize the mixed-strategy cost over the feasible interval
    Optimize(CommonArgs),
    /// Run the discrete-event simulator
    Simulate(CommonArgs),
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    use crn_queues::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Unstable { .. }) | Some(Error::RefinementInstability { .. }) => 2,
        Some(Error::TruncationCapExceeded { .. }) | Some(Error::TruncationInsufficient { .. }) => 3,
        Some(Error::EventBudgetExceeded { .. }) => 4,
        _ => 1,
    }
}

type Handler = fn(&RunConfig, &OutDir, &CommonArgs) -> Result<()>;

fn run(command: Command) -> Result<()> {
    let (args, handler): (&CommonArgs, Handler) =
        match &command {
            Command::Analyze(args) => (args, |c, o, _| commands::analyze(c, o)),
            Command::Sweep(args) => (args, |c, o, a| commands::sweep(c, o, a.no_sim)),
            Command::Synthesize(args) => (args, |c, o, _| commands::synthesize(c, o)),
            Command::Optimize(args) => (args, |c, o, _| commands::optimize_cmd(c, o)),
            Command::Simulate(args) => {
                (args, |c, o, a| commands::simulate(c, o, a.emit_event_log))
            }
        };

    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.simulation.get_or_insert_with(Default::default).seed = seed;
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let out = OutDir::new(out_dir)?;
    handler(&config, &out, args)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
