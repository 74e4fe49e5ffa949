//! `rwrek`: experiments on random walks in random environments with killing.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    CompareArgs, ConstructArgs, FitArgs, RatesArgs, SimulateAnnealedArgs, SimulateQuenchedArgs, SrwCheckArgs,
    ValidateArgs,
};

#[derive(Parser, Debug)]
#[command(name = "rwrek", version, about, args_override_self = true)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a law file and classify its regime.
    #[command(args_override_self = true)]
    Validate(ValidateArgs),
    /// Build a law with a prescribed min(p_n^+, p_n^-) decay.
    #[command(args_override_self = true)]
    Construct(ConstructArgs),
    /// Exponents and decay prediction of a law (JSON).
    #[command(args_override_self = true)]
    Rates(RatesArgs),
    /// Quenched survival curve of one environment (CSV).
    #[command(args_override_self = true)]
    SimulateQuenched(SimulateQuenchedArgs),
    /// Annealed survival curve averaged over sampled environments (CSV).
    #[command(args_override_self = true)]
    SimulateAnnealed(SimulateAnnealedArgs),
    /// Fit a survival curve in regime coordinates (JSON).
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Exit-time law of the simple random walk on [-l, l].
    #[command(args_override_self = true)]
    SrwCheck(SrwCheckArgs),
    /// Fit a curve and compare it against the law's predicted decay (JSON).
    #[command(args_override_self = true)]
    Compare(CompareArgs),
}

const SUBCOMMANDS: &[&str] = &[
    "validate",
    "construct",
    "rates",
    "simulate-quenched",
    "simulate-annealed",
    "fit",
    "srw-check",
    "compare",
];

/// Exit status for malformed input or an invalid law / configuration.
const EXIT_VALIDATION: u8 = 2;
/// Exit status for a numerical failure (degenerate rates, unusable fits).
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    let args = match config::expand_config(std::env::args().collect(), SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} worker threads: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    let result = match &cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::Construct(a) => commands::construct(a),
        Command::Rates(a) => commands::rates(a),
        Command::SimulateQuenched(a) => commands::simulate_quenched(a),
        Command::SimulateAnnealed(a) => commands::simulate_annealed(a),
        Command::Fit(a) => commands::fit(a),
        Command::SrwCheck(a) => commands::srw_check(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
