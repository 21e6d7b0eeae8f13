//! `eti`: analyze two-chain specs, compute designs and run simulations.
//!
//! State numbers given on the command line are 1-based; indices inside JSON
//! output are 0-based.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Failure;

#[derive(Parser, Debug)]
#[command(name = "eti", version, about = "Experiment design for two Markov chains on a shared state space")]
pub struct Cli {
    /// Worker threads for replications (defaults to all cores). Does not
    /// affect results.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Base seed. Overrides ETI_SEED and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with default settings for the command.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Directory for output files; results always go to stdout as well.
    #[arg(long, global = true)]
    pub out: Option<std::path::PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Stationary distributions, Poisson solutions, per-state variances and α.
    Analyze(SpecArg),
    /// Optimal Markov design, and optionally the optimal regenerative design.
    Design(DesignArgs),
    /// One trajectory under a static or adaptive design.
    Simulate(SimulateArgs),
    /// Monte Carlo replications with a variance summary.
    Mc(McArgs),
    /// One trajectory under an adaptive design.
    Online(OnlineArgs),
    /// Cooperative versus isolated sampling on the opposite-cycles instance.
    Coop(CoopArgs),
}

#[derive(Args, Debug)]
pub struct SpecArg {
    /// Chain spec JSON file.
    #[arg(long)]
    pub spec: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Also compute the optimal regenerative design at this state (1-based).
    #[arg(long, value_name = "STATE")]
    pub regenerative: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct AdaptiveArgs {
    /// Exploration exponent in (0, 1).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Re-solve schedule of the adaptive Markov design.
    #[arg(long, value_enum)]
    pub resolve: Option<ResolveArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolveArg {
    EveryStep,
    Pow2,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Design: markov:P1,..,PS | regenerative:STATE:P | switchback[:D] |
    /// single:CHAIN | coop | optimal | optimal-regenerative:STATE | eti |
    /// eti2:STATE.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub n: Option<u64>,
    /// Checkpoint interval in steps.
    #[arg(long)]
    pub checkpoint: Option<u64>,
    /// Initial state (1-based).
    #[arg(long)]
    pub x0: Option<usize>,
    #[command(flatten)]
    pub adaptive: AdaptiveArgs,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[command(flatten)]
    pub run: SimulateArgs,
    #[arg(long)]
    pub reps: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Eti,
    Eti2,
}

#[derive(Args, Debug)]
pub struct OnlineArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    #[arg(long, value_enum, default_value = "eti")]
    pub algo: Algo,
    /// Regeneration state for eti2 (1-based).
    #[arg(long)]
    pub xr: Option<usize>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub checkpoint: Option<u64>,
    #[command(flatten)]
    pub adaptive: AdaptiveArgs,
}

#[derive(Args, Debug)]
pub struct CoopArgs {
    /// Cycle lengths; repeat the flag for several.
    #[arg(long = "s", value_name = "S")]
    pub s: Vec<usize>,
    #[arg(long)]
    pub q1: Option<f64>,
    #[arg(long)]
    pub q2: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
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
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(match f {
                Failure::Config(_) => 1,
                Failure::Spec(_) => 2,
                Failure::Runtime(_) => 3,
            })
        }
    }
}
