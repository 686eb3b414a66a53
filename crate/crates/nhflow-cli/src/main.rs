//! Scenario runner: constructs a system, integrates it, runs the
//! scenario's verification checks, and writes a CSV time series plus a JSON
//! verdict report. Exit status is zero exactly when all checks pass.

mod config;
mod report;
mod scenarios;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::ScenarioConfig;
use report::VerdictReport;

#[derive(Parser)]
#[command(
    name = "nhflow",
    version,
    about = "Simulation and verification scenarios for nonholonomic flows on compact groups"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report and time series.
    Run {
        /// Scenario name (see `list`).
        #[arg(long)]
        scenario: Option<String>,
        /// JSON configuration file (strict schema).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for CSV and report files.
        #[arg(long)]
        output: Option<String>,
        /// Seed for the pseudo-random initial data.
        #[arg(long)]
        seed: Option<u64>,
        /// Integration horizon override.
        #[arg(long, value_name = "T")]
        t_final: Option<f64>,
        /// Time-step override.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// List the registered scenarios.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            list_scenarios();
            ExitCode::SUCCESS
        }
        Command::Run {
            scenario,
            config,
            output,
            seed,
            t_final,
            dt,
        } => match run(scenario, config, output, seed, t_final, dt) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(err) => {
                eprintln!("error: {err:#}");
                ExitCode::from(2)
            }
        },
    }
}

fn list_scenarios() {
    let reg = scenarios::registry();
    let widest = reg.iter().map(|s| s.name.len()).max().unwrap_or(0);
    println!("{:widest$}  {}", "NAME", "DESCRIPTION / VERIFIES");
    for s in reg {
        println!("{:widest$}  {}", s.name, s.description);
        println!("{:widest$}  verifies: {}", "", s.verifies);
    }
}

fn run(
    scenario: Option<String>,
    config_path: Option<PathBuf>,
    output: Option<String>,
    seed: Option<u64>,
    t_final: Option<f64>,
    dt: Option<f64>,
) -> Result<bool> {
    let file_config = match &config_path {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let resolved = file_config.resolve(scenario, seed, t_final, dt, output)?;
    let info = scenarios::find(&resolved.scenario).with_context(|| {
        format!(
            "config error: unknown scenario '{}' (see `nhflow list`)",
            resolved.scenario
        )
    })?;

    let outcome = (info.run)(&resolved)?;
    let report = VerdictReport::new(&resolved, outcome.checks);
    report.print_summary();

    let dir = std::path::Path::new(&resolved.output.dir);
    if resolved.output.write_csv {
        for dump in &outcome.dumps {
            let path = dump.write(dir)?;
            println!("wrote {}", path.display());
        }
    }
    let path = report.write(dir)?;
    println!("wrote {}", path.display());

    Ok(report.pass)
}
