//! `del` - batch driver for the dissipative Euler laboratory.
//!
//! Subcommands: solve, sweep, defects, verify, oscillate, select.
//! Exit status: 0 on success, 2 when a verification verdict fails, 1 on any
//! other error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::RunContext;
use config::Config;

#[derive(Parser)]
#[command(name = "del", version, about = "dissipative Euler laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (flat key = value with [sections]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: $DEL_OUT_DIR/<command> or ./del-out/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for independent runs (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Seed for randomized initial data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// One viscous run: snapshots and the energy ledger.
    Solve,
    /// Vanishing-viscosity sweep: consistency table and sequence defects.
    Sweep,
    /// Defect fields of one run on the coarse partition.
    Defects,
    /// Weak-form residuals, energy inequality, compatibility verdict.
    Verify,
    /// Checkerboard weak-*-vs-strong convergence diagnostics.
    Oscillate,
    /// Admissible-solution selection over an epsilon ensemble.
    Select,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Defects => "defects",
            Command::Verify => "verify",
            Command::Oscillate => "oscillate",
            Command::Select => "select",
        }
    }
}

fn out_root(cli_out: Option<PathBuf>, command: &str) -> PathBuf {
    match cli_out {
        Some(p) => p,
        None => {
            let root = std::env::var_os("DEL_OUT_DIR")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("del-out"));
            root.join(command)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let config_path = cli
        .config
        .ok_or_else(|| anyhow::anyhow!("--config <path> is required"))?;
    let text = std::fs::read_to_string(&config_path)
        .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", config_path.display()))?;
    let config = Config::parse(&text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", config_path.display()))?;
    let out = out_root(cli.out, cli.command.name());
    std::fs::create_dir_all(&out)
        .map_err(|e| anyhow::anyhow!("cannot create output directory {}: {e}", out.display()))?;
    let ctx = RunContext { config, out, seed: cli.seed, threads: cli.threads };
    match cli.command {
        Command::Solve => commands::solve(&ctx),
        Command::Sweep => commands::sweep(&ctx),
        Command::Defects => commands::defects(&ctx),
        Command::Verify => commands::verify(&ctx),
        Command::Oscillate => commands::oscillate(&ctx),
        Command::Select => commands::select(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
