use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kleinian::cli::{exit_code, run, Command, RunOptions};
use kleinian::config::RunConfig;

#[derive(Parser)]
#[command(version, about = "Orbit growth, free subsemigroups, Patterson-Sullivan atoms and limit-set dimension")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// TOML configuration; defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the randomized suites (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config; default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit timestamps so that reruns are byte-identical.
    #[arg(long, global = true)]
    fixed_clock: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Enumerate the orbit ball and dump it as CSV.
    Enumerate,
    /// Estimate the critical exponent.
    Exponent,
    /// Run the randomized and exhaustive lemma suites.
    VerifyLemmas,
    /// Search for a deep element.
    Deep,
    /// Build the staged free subsemigroup.
    Build,
    /// Patterson-Sullivan atoms, shadow principle and sublinear tail.
    Measure,
    /// Box dimension against the exponent.
    Dimension,
    /// Every step above, in order.
    All,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Enumerate => Command::Enumerate,
            Cmd::Exponent => Command::Exponent,
            Cmd::VerifyLemmas => Command::VerifyLemmas,
            Cmd::Deep => Command::Deep,
            Cmd::Build => Command::Build,
            Cmd::Measure => Command::Measure,
            Cmd::Dimension => Command::Dimension,
            Cmd::All => Command::All,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match &args.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let out = args.out.clone().or_else(|| cfg.output.clone().map(PathBuf::from)).unwrap_or_else(|| "out".into());
    let opts = RunOptions { out, fixed_clock: args.fixed_clock };
    match run(args.command.into(), &cfg, args.seed, &opts) {
        Ok(reports) => {
            for r in &reports {
                println!("{:<14} {:?}", r.command, r.status);
                for f in &r.failures {
                    println!("  failure: {f}");
                }
            }
            ExitCode::from(exit_code(&reports) as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(4)
        }
    }
}
