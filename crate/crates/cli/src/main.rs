//! `xbar`: enumerate, evaluate, query and verify crossbar designs.
//!
//! Exit codes: 0 success; 1 the command ran but the answer is negative (no
//! feasible design, verification errors, failed sweep points, empty
//! repository); 2 bad usage or unreadable input. Data goes to stdout or the
//! named files, logs to stderr.

mod circuit;
mod data;
mod manifest;
mod report;
mod select;
mod util;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;
use xbar_core::DeviceConfig;

use util::{input, Ctx};

#[derive(Parser)]
#[command(name = "xbar", version, about = "Design-space exploration for resistive crossbar accelerators")]
struct Cli {
    /// Device, bitcell and technology constants (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for synthetic weights, test vectors and fault injection.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Print one JSON document on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the design keys of a grid.
    Enumerate(GridArgs),
    /// Evaluate one design point.
    Eval(data::EvalArgs),
    /// Evaluate every point of a grid into a repository file.
    Sweep(data::SweepArgs),
    /// Write the published reference table as a repository.
    SeedPaper(data::SeedArgs),
    /// Rank a repository against a constraint query.
    Query(select::QueryArgs),
    /// List the Pareto-optimal designs of a repository.
    Pareto(select::ParetoArgs),
    /// Generate the SPICE netlist of one crossbar tile.
    Netlist(circuit::NetlistArgs),
    /// Lint and simulate a netlist, or run a fault-detection campaign.
    Verify(circuit::VerifyArgs),
    /// Turn a natural-language request into a query and rank the repository.
    LlmQuery(select::LlmQueryArgs),
    /// Score a query backend on a task suite.
    Passk(select::PassKArgs),
    /// Grouped statistics and Pareto front of a repository.
    Report(report::ReportArgs),
}

#[derive(Args, Clone)]
pub struct GridArgs {
    /// Grid file (TOML); defaults to the full grid, or the reference-table shape with --table2.
    #[arg(long, conflicts_with = "table2")]
    grid: Option<PathBuf>,
    /// The 20 x 3 shape of the published reference table.
    #[arg(long)]
    table2: bool,
    /// Mode for --table2: analog, d<bits>.
    #[arg(long, default_value = "analog")]
    mode: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_env_filter(EnvFilter::try_from_env("XBAR_LOG").unwrap_or_else(|_| EnvFilter::new(level)))
        .init();

    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e.err);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> util::CliResult<u8> {
    let config = match &cli.config {
        Some(p) => DeviceConfig::load(p).map_err(input)?,
        None => DeviceConfig::default(),
    };
    let parallel = cli
        .parallel
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
        .max(1);
    let ctx = Ctx {
        json: cli.json,
        seed: cli.seed,
        parallel,
        config,
        config_path: cli.config.clone(),
        argv: std::env::args().collect(),
    };
    match cli.command {
        Command::Enumerate(a) => data::enumerate(&ctx, &a),
        Command::Eval(a) => data::eval(&ctx, &a),
        Command::Sweep(a) => data::sweep(&ctx, &a),
        Command::SeedPaper(a) => data::seed_paper(&ctx, &a),
        Command::Query(a) => select::query(&ctx, &a),
        Command::Pareto(a) => select::pareto(&ctx, &a),
        Command::Netlist(a) => circuit::netlist(&ctx, &a),
        Command::Verify(a) => circuit::verify(&ctx, &a),
        Command::LlmQuery(a) => select::llm_query(&ctx, &a),
        Command::Passk(a) => select::passk(&ctx, &a),
        Command::Report(a) => report::report(&ctx, &a),
    }
}
