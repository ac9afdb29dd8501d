use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hydrostat::experiments::{run_scenario, snapshot, RunConfig, Scenario};
use hydrostat::Error;

#[derive(Parser)]
#[command(name = "hydrostat", version, about = "Hydrostatic primitive-equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run { config: PathBuf },
    /// Run the acceptance suite (criteria from `scenario.criteria`).
    Verify { config: PathBuf },
    /// Print RMS and max-abs differences between two snapshots.
    Diff { a: PathBuf, b: PathBuf },
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("HYDROSTAT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config {
            key: "HYDROSTAT_THREADS".into(),
            message: format!("expected a positive integer, got `{raw}`"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config {
            key: "HYDROSTAT_THREADS".into(),
            message: e.to_string(),
        })
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("hydrostat: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn execute(cfg: RunConfig) -> ExitCode {
    match run_scenario(&cfg) {
        Ok(out) => {
            print!("{}", out.report.render());
            for c in out.checks.iter().filter(|c| !c.passed) {
                eprintln!("check `{}` failed: {}", c.name, c.detail);
            }
            if out.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            }
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    match cli.command {
        Command::Run { config } => match RunConfig::load(&config) {
            Ok(cfg) => execute(cfg),
            Err(e) => fail(&e),
        },
        Command::Verify { config } => match RunConfig::load_with_default(&config, Some(Scenario::Verify)) {
            Ok(mut cfg) => {
                cfg.scenario = Scenario::Verify;
                execute(cfg)
            }
            Err(e) => fail(&e),
        },
        Command::Diff { a, b } => {
            let res = snapshot::Snapshot::read(&a)
                .and_then(|sa| snapshot::Snapshot::read(&b).and_then(|sb| snapshot::diff(&sa, &sb)));
            match res {
                Ok((rms, inf)) => {
                    println!("l2_rms = {rms:e}");
                    println!("linf = {inf:e}");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
