use std::path::PathBuf;

use clap::{Parser, Subcommand};
use rps_cli::{run, Command, Overrides};

/// Solve and classify radial phi-Laplacian systems.
#[derive(Parser)]
#[command(name = "rps", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// JSON report path (overrides outputs.report_json; stdout if neither is set).
    #[arg(long)]
    report: Option<PathBuf>,
    /// CSV path (overrides outputs.solution_csv, or outputs.sweep_csv for sweeps).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the monotone iteration and write the solution.
    Solve(Common),
    /// Probe the growth functionals and classify the solution.
    Classify(Common),
    /// Check hypotheses, envelopes and optional reference criteria.
    Validate(Common),
    /// Classify over a grid of parameter values.
    Sweep(Common),
}

fn main() {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Classify(c) => (Command::Classify, c),
        Cmd::Validate(c) => (Command::Validate, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
    };
    let overrides = Overrides {
        report_json: common.report,
        csv: common.csv,
    };
    std::process::exit(run(cmd, &common.config, &overrides));
}
