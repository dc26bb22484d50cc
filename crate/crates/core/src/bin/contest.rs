use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contest_core::cli::{self, SimulateArgs};

/// Promotion-contest toolkit: index tables, contest simulation,
/// brute-force verification, and comparative-statics experiments.
#[derive(Parser)]
#[command(name = "contest", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute Gittins and strategic index tables for every worker.
    Index {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Simulate the index contest and summarize payoffs and outcomes.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the config's replication count.
        #[arg(long)]
        replications: Option<usize>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the replication loop (results are identical
        /// for any value).
        #[arg(long)]
        threads: Option<usize>,
        /// How many traces to write to traces.csv.
        #[arg(long, default_value_t = 10)]
        trace_sample: usize,
    },
    /// Run the oracle suite: single-arm optimality, implementability, the
    /// envelope identity, and the feasible-family upper bound.
    Verify {
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Policy family to enumerate.
        #[arg(long, default_value = "standard")]
        family: String,
    },
    /// Run a named experiment (tbar, reinforcing, gap, fasttrack,
    /// seniority, convexcomp).
    Experiment {
        name: String,
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Index { config, out } => cli::cmd_index(config, out),
        Command::Simulate {
            config,
            out,
            replications,
            seed,
            threads,
            trace_sample,
        } => cli::cmd_simulate(
            config,
            out,
            &SimulateArgs {
                replications: *replications,
                seed: *seed,
                threads: *threads,
                trace_sample: *trace_sample,
            },
        ),
        Command::Verify {
            config,
            out,
            family,
        } => cli::cmd_verify(config, out, family),
        Command::Experiment { name, config, out } => cli::cmd_experiment(name, config, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
