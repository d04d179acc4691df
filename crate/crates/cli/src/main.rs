use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use surge_core::harness::{execute, parse_scenario, Command, Format, HarnessError};

/// Surge-zone simulations driven by scenario files.
#[derive(Parser)]
#[command(name = "surge", version)]
struct Cli {
    /// Overrides the scenario's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Writes output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: OutputFormat,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate once and print the per-step rows.
    Run { file: PathBuf },
    /// Vary one parameter over the [sweep] values.
    Sweep { file: PathBuf },
    /// Fit the fluid model's k to agent runs.
    FitK { file: PathBuf },
    /// Strategic vs benchmark price-gap map over cost distributions.
    Heatmap { file: PathBuf },
    /// Convergence times against their theoretical windows.
    Audit { file: PathBuf },
}

fn fail(err: &HarnessError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, file) = match cli.command {
        Cmd::Run { file } => (Command::Run, file),
        Cmd::Sweep { file } => (Command::Sweep, file),
        Cmd::FitK { file } => (Command::FitK, file),
        Cmd::Heatmap { file } => (Command::Heatmap, file),
        Cmd::Audit { file } => (Command::Audit, file),
    };
    let format = match cli.format {
        OutputFormat::Csv => Format::Csv,
        OutputFormat::Json => Format::Json,
    };

    let text = match fs::read_to_string(&file) {
        Ok(t) => t,
        Err(e) => return fail(&HarnessError::Io(format!("{}: {e}", file.display()))),
    };
    let mut scenario = match parse_scenario(&text) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    if let Some(seed) = cli.seed {
        scenario = scenario.with_seed(seed);
    }

    let outcome = match execute(command, &scenario, format) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    match &cli.out {
        Some(path) => {
            if let Err(e) = fs::write(path, &outcome.text) {
                return fail(&HarnessError::Io(format!("{}: {e}", path.display())));
            }
        }
        None => print!("{}", outcome.text),
    }
    for msg in &outcome.unconverged {
        eprintln!("not converged: {msg}");
    }
    for msg in &outcome.failures {
        eprintln!("expectation failed: {msg}");
    }
    ExitCode::from(outcome.exit_code() as u8)
}
