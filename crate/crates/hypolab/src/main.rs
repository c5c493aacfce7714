use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hypolab::{run, CliError, Command, RunConfig};

/// Decay-rate certificates, propagator norms and phase-space runs for the
/// kinetic Fokker–Planck equation.
///
/// Exit status: 0 success, 1 I/O failure, 2 invalid configuration,
/// 3 infeasible or failing certificate, 4 numerical failure.
#[derive(Parser)]
#[command(name = "hypolab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the condition matrix over the box.
    Check(Args),
    /// Decay rate for the configured or best certified (c, τ).
    Rate(Args),
    /// Lyapunov, sandwich and short-time certificates.
    Certify(Args),
    /// Propagator norm curve of a quadratic potential.
    Propagator(Args),
    /// Phase-space run with functional tracking.
    Simulate(Args),
    /// Short-time gradient exponents from a rough datum.
    Hypo(Args),
    /// Every section listed in `report.include`, bundled.
    Report(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML run configuration.
    config: PathBuf,
    /// Override a configuration key, e.g. `--set model.nu=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Check(a) => (Command::Check, a),
        Cmd::Rate(a) => (Command::Rate, a),
        Cmd::Certify(a) => (Command::Certify, a),
        Cmd::Propagator(a) => (Command::Propagator, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Hypo(a) => (Command::Hypo, a),
        Cmd::Report(a) => (Command::Report, a),
    };
    let result = RunConfig::load(&args.config, &args.set).and_then(|cfg| {
        let out = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
        run(cmd, &cfg, &out)
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hypolab: {e}");
            if let CliError::Infeasible { artifact: Some(p), .. } = &e {
                eprintln!("hypolab: certificate written to {}", p.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
