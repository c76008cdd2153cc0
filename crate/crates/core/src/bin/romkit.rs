use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use romkit::cli::{exit_code, failure_line, run_stage, Stage};
use romkit::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "romkit",
    version,
    about = "POD/Galerkin reduced-order models with data-driven closure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order model and write the training snapshots.
    Generate(Args),
    /// Build the POD basis, Galerkin operators, closure targets and closures.
    Train(Args),
    /// Integrate the configured reduced model from the trained artifacts.
    Simulate(Args),
    /// Run the parameter sweep and write the CSV report and summary.
    Report(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Generate(a) => (Stage::Generate, a),
        Command::Train(a) => (Stage::Train, a),
        Command::Simulate(a) => (Stage::Simulate, a),
        Command::Report(a) => (Stage::Report, a),
    };
    let result = RunConfig::load(&args.config).and_then(|cfg| run_stage(stage, &cfg));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            println!("{}", outcome.status_line());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", failure_line(stage, &e));
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
