use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hessq_cli::commands;

/// Numerical laboratory for Hessian-quotient equations on flat complex tori.
#[derive(Parser)]
#[command(name = "hessq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Suppress progress notes on stderr.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Verify the subsolution candidate and write certificate.json.
    Certify,
    /// Solve by the configured method and write probes.csv plus the final field.
    Solve,
    /// Run the parabolic flow regardless of the configured method.
    Flow,
    /// Manufactured-solution convergence sweep over grid sizes.
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("hessq: error: --config <path> is required");
        return ExitCode::from(commands::EXIT_VALIDATION as u8);
    };
    let sub = match cli.command {
        Cmd::Certify => commands::Subcommand::Certify,
        Cmd::Solve => commands::Subcommand::Solve,
        Cmd::Flow => commands::Subcommand::Flow,
        Cmd::Sweep => commands::Subcommand::Sweep,
    };
    let code = commands::run(sub, &config, cli.output, cli.quiet);
    ExitCode::from(code as u8)
}
