use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use partivae_cli::commands::{self, Overrides, Run};
use partivae_cli::CliError;

#[derive(Parser)]
#[command(name = "partivae", version, about = "Partition functions and samples from a reversed VAE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and report its hard-sample bound.
    Train(Args),
    /// Train one model per latent dimension in `d_set`.
    Sweep(Args),
    /// Draw configurations from a trained model.
    Sample(Args),
    /// Re-estimate the bound of a trained model.
    Estimate(Args),
    /// Exact ln Z by enumeration and, for Ising, the transfer matrix.
    Oracle(Args),
    /// MCMC samples and marginals.
    Mcmc(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model file (sample, estimate).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of samples (sample).
    #[arg(long)]
    n: Option<usize>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (args, f): (Args, fn(&Run) -> Result<(), CliError>) = match cli.command {
        Command::Train(a) => (a, commands::train),
        Command::Sweep(a) => (a, commands::sweep),
        Command::Sample(a) => (a, commands::sample),
        Command::Estimate(a) => (a, commands::estimate),
        Command::Oracle(a) => (a, commands::oracle),
        Command::Mcmc(a) => (a, commands::mcmc),
    };
    let overrides = Overrides {
        seed: args.seed,
        out: args.out,
        model: args.model,
        n: args.n,
    };
    f(&Run::prepare(&args.config, overrides)?)
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("partivae: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
