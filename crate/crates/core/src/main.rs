use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsgd_aau::cli::{execute_plan, parse_config, Overrides};
use dsgd_aau::engine::Algorithm;
use dsgd_aau::pathsearch::AcceptRule;
use dsgd_aau::theory::{TheoryParams, TheoryReport};

/// Simulate decentralized SGD with adaptive asynchronous updates.
#[derive(Debug, Parser)]
#[command(version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print step-size limits and convergence bounds for given constants.
    Theory(TheoryArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_algo)]
    algo: Option<Algorithm>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    k_budget: Option<usize>,
    /// Simulated-time budget in seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long, value_parser = parse_rule)]
    pathsearch_rule: Option<AcceptRule>,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    workers: usize,
    /// Bounded connectivity time.
    #[arg(long)]
    b: usize,
    #[arg(long)]
    lipschitz: f64,
    #[arg(long)]
    sigma_l: f64,
    #[arg(long)]
    varsigma: f64,
    /// Initial optimality gap.
    #[arg(long)]
    f0_gap: f64,
    /// Step size; defaults to the largest admissible one.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    k: usize,
}

fn parse_algo(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

fn parse_rule(s: &str) -> Result<AcceptRule, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Some(Command::Theory(t)) => theory(t),
        None => run(cli.run),
    }
}

fn theory(t: TheoryArgs) -> ExitCode {
    let params = TheoryParams {
        beta: t.beta,
        n: t.workers,
        b: t.b,
        lipschitz: t.lipschitz,
        sigma_l: t.sigma_l,
        varsigma: t.varsigma,
        f0_gap: t.f0_gap,
    };
    match TheoryReport::compute(params, t.eta, t.k) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(args: RunArgs) -> ExitCode {
    let overrides = Overrides {
        algorithm: args.algo,
        workers: args.workers,
        seed: args.seed,
        out: args.out,
        k_budget: args.k_budget,
        time_budget: args.time_budget,
        pathsearch_rule: args.pathsearch_rule,
    };
    let plan = match parse_config(args.config.as_deref(), &overrides) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match execute_plan(&plan) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}: {e}", plan.out_dir.display());
            return ExitCode::from(2);
        }
    };
    for o in &report.outcomes {
        match &o.result {
            Ok(files) => println!("ok     {} -> {}", o.config_hash, files.csv.display()),
            Err(e) => eprintln!("failed {}: {e}", o.config_hash),
        }
    }
    if let Some(p) = &report.comparison {
        println!("comparison -> {}", p.display());
    }
    ExitCode::from(report.exit_code() as u8)
}
