//! Command-line entry point.
//!
//! `quasibell run <scenario.toml>` evaluates one scenario and writes its
//! artifacts. Exit codes: 0 on success, 2 for configuration problems, 3 for
//! numeric or runtime failures. Regime warnings go to stderr and never stop
//! a run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use quasibell_cli::config::{MethodChoice, Scenario};
use quasibell_cli::tasks;

#[derive(Parser)]
#[command(
    name = "quasibell",
    version,
    about = "Entangled qubit-oscillator dynamics and phase-space delocalization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluates one scenario file and writes its artifacts.
    Run {
        /// TOML scenario file.
        config: PathBuf,
        /// Directory the artifacts are written into.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Caps the worker thread count (overrides QUASIBELL_THREADS).
        #[arg(long)]
        threads: Option<usize>,
        /// Uses the fine phase-space grid (601 points per axis).
        #[arg(long)]
        fine_grid: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            threads,
            fine_grid,
        } => run_command(&config, &out, threads, fine_grid),
    }
}

fn config_fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(2)
}

fn run_command(
    config: &PathBuf,
    out: &PathBuf,
    threads: Option<usize>,
    fine_grid: bool,
) -> ExitCode {
    let threads = match threads {
        Some(n) => Some(n),
        None => match std::env::var("QUASIBELL_THREADS") {
            Ok(v) => match v.parse::<usize>() {
                Ok(n) => Some(n),
                Err(_) => {
                    return config_fail(format!(
                        "QUASIBELL_THREADS must be a positive integer, got '{v}'"
                    ))
                }
            },
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return config_fail("thread count must be positive");
        }
        quasibell::parallel::configure_threads(n);
    }

    let text = match std::fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => return config_fail(format!("read {}: {e}", config.display())),
    };
    let scenario = match Scenario::from_toml(&text) {
        Ok(s) => s,
        Err(e) => return config_fail(e),
    };
    warn_regimes(&scenario);

    match tasks::run(&scenario, out, fine_grid) {
        Ok(paths) => {
            for p in &paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprintln!("{failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

/// Prints advisory regime warnings for the fixed coupling, or for both
/// endpoints of a coupling scan.
fn warn_regimes(sc: &Scenario) {
    let mut probes = Vec::new();
    match sc.lambda {
        Some(l) => probes.push(l),
        None => {
            let ls = sc.axis.lambdas();
            if let (Some(&lo), Some(&hi)) = (ls.first(), ls.last()) {
                probes.push(lo);
                if hi > lo {
                    probes.push(hi);
                }
            }
        }
    }
    for l in probes {
        let Ok(p) = sc.params_at(l) else { continue };
        let r = p.regimes();
        if !r.adiabatic {
            eprintln!(
                "warning: delta/omega >= 1 at lambda={l}; the adiabatic block decoupling is outside its regime"
            );
        }
        let theta_requested = matches!(sc.method, MethodChoice::Theta | MethodChoice::Both);
        if theta_requested && !r.theta_forms {
            eprintln!(
                "warning: the closed theta forms are outside their matched window at lambda={l}"
            );
        }
        if r.ultra_strong {
            eprintln!(
                "warning: lambda={l} is of order omega; adiabatic results are qualitative there"
            );
        }
    }
}
