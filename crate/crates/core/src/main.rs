use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aoii::experiment::{
    run_simulate, run_solve, run_sweep, run_verify_condition1, ExperimentConfig, Format, Table,
};
use aoii::AoiiError;

/// Expected AoII of threshold policies over a random-delay channel.
#[derive(Parser)]
#[command(name = "aoii", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the threshold-1 optimality condition on every grid point.
    VerifyCondition1(Common),
    /// Expected AoII of τ ∈ {0, 1, ∞} and extra thresholds over the grid.
    Sweep(Common),
    /// Solve the truncated MDP and compare with the threshold-1 analysis.
    Solve(Common),
    /// Monte Carlo estimates next to the analytic values.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; defaults to the config's output.path, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format; defaults to the config's output.format.
    #[arg(long)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides simulation.seed.
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Verification(String),
    Usage(String),
}

impl From<AoiiError> for Failure {
    fn from(e: AoiiError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn emit(table: &Table, cfg: &ExperimentConfig, args: &Common, default: Format) -> Result<(), Failure> {
    let format = args.format.or(cfg.output.format).unwrap_or(default);
    let path = args
        .out
        .clone()
        .or_else(|| cfg.output.path.as_ref().map(PathBuf::from));
    let io_err = |e: io::Error| Failure::Usage(format!("cannot write output: {e}"));
    match path {
        Some(p) => {
            let file = File::create(&p)
                .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            table.write(&mut w, format)?;
            w.flush().map_err(io_err)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            table.write(&mut w, format)?;
            w.flush().map_err(io_err)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (Command::VerifyCondition1(args)
    | Command::Sweep(args)
    | Command::Solve(args)
    | Command::Simulate(args)) = &cli.command;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
    }
    let cfg = ExperimentConfig::from_path(&args.config)?;
    match &cli.command {
        Command::VerifyCondition1(_) => {
            let (table, all_hold) = run_verify_condition1(&cfg)?;
            emit(&table, &cfg, args, Format::Csv)?;
            if cfg.expect_all_hold && !all_hold {
                let failing = table.rows.len()
                    - table
                        .rows
                        .iter()
                        .filter(|r| r[table.column("holds").unwrap()] == true.into())
                        .count();
                return Err(Failure::Verification(format!(
                    "condition 1 fails or cannot be evaluated at {failing} grid point(s)"
                )));
            }
        }
        Command::Sweep(_) => {
            let table = run_sweep(&cfg, args.seed)?;
            emit(&table, &cfg, args, Format::Csv)?;
        }
        Command::Solve(_) => {
            let (table, ok) = run_solve(&cfg)?;
            emit(&table, &cfg, args, Format::Json)?;
            if !ok {
                let col = table.column("error").unwrap();
                let first = table
                    .rows
                    .iter()
                    .find_map(|r| match &r[col] {
                        aoii::experiment::Cell::Text(e) => Some(e.clone()),
                        _ => None,
                    })
                    .unwrap_or_default();
                return Err(Failure::Verification(first));
            }
        }
        Command::Simulate(_) => {
            let table = run_simulate(&cfg, args.seed)?;
            emit(&table, &cfg, args, Format::Csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("aoii: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("aoii: {msg}");
            ExitCode::from(2)
        }
    }
}
