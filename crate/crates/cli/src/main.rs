use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use filter_audit_cli::{emit_report, execute, parse_config, CliError, Command};

/// Black-box audits of filtering algorithms, Monte Carlo checks and
/// cost-of-regulation sweeps.
///
/// Exit status: 0 on H0 / pass, 2 on H1 / fail, 1 on error.
#[derive(Debug, Parser)]
#[command(name = "filter-audit", version)]
struct Args {
    command: Command,

    /// Config file (key = value lines under [section] headers)
    #[arg(long)]
    config: PathBuf,

    /// Output directory for report.json, run.meta and CSV files
    #[arg(long, env = "FILTER_AUDIT_OUT")]
    out: PathBuf,

    /// Override a config value, e.g. --set audit.epsilon=0.1
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(args: &Args) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::Io {
        path: args.config.clone(),
        source: e,
    })?;
    let config = parse_config(args.command, &text, &args.overrides)?;
    let report = execute(&config)?;
    emit_report(&report, &config, &args.out)?;
    println!("{}", report.headline());
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
