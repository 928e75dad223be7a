use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hjbqvi_cli::{parse_config, run, RunOutcome};

#[derive(Parser)]
#[command(
    name = "hjbqvi",
    version,
    about = "Solve and study impulse control HJB quasi-variational inequalities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and write solution.csv, report.json and plotdata.csv.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run hypothesis and property checks; exit nonzero if any fails.
        #[arg(long)]
        check: bool,
    },
    /// Refinement study with errors and observed orders.
    Study {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        levels: Option<u32>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the problem data against the standing hypotheses.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn report(outcome: &RunOutcome) -> ExitCode {
    for file in &outcome.files {
        eprintln!("wrote {}", file.display());
    }
    if outcome.success() {
        ExitCode::SUCCESS
    } else {
        for failure in &outcome.failures {
            eprintln!("FAILED: {failure}");
        }
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.command {
        Command::Solve { config, .. }
        | Command::Study { config, .. }
        | Command::Validate { config } => config,
    };
    let spec = match parse_config(config) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Solve { out, check, .. } => {
            run::solve(&spec, out.as_deref(), *check).map(|o| report(&o))
        }
        Command::Study { levels, out, .. } => {
            run::study(&spec, out.as_deref(), *levels).map(|o| report(&o))
        }
        Command::Validate { .. } => run::validate_spec(&spec).and_then(|v| {
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&v)?);
            Ok(if v.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
