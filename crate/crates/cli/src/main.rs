use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sqlab_cli::calibrate::run_calibrate;
use sqlab_cli::coverage::{certificate_status, run_coverage};
use sqlab_cli::demo::{run_demo, write_trace};
use sqlab_cli::sweep::{run_sweep, write_csv};
use sqlab_cli::verify::{run_verify, VerifyOptions};
use sqlab_cli::{CliError, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "sqlab", version, about = "Statistical-query experiments for sparse mixtures and sparse regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Empirical risk over gamma_grid, as CSV.
    Sweep,
    /// Coverage certificate for one detector at one signal strength.
    Coverage,
    /// Null-calibrated thresholds, as JSON.
    Calibrate,
    /// Numerical and combinatorial self-checks.
    Verify,
    /// Proximal gradient on synthetic sparse regression.
    DemoSgd,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::usage("--config is required for this subcommand"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply(Overrides { seed: cli.seed, threads: cli.threads });
    Ok(cfg)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

#[cfg(feature = "parallel")]
fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    if threads == Some(0) {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Verify => {
            init_threads(cli.threads)?;
            let report = run_verify(&VerifyOptions { seed: cli.seed.unwrap_or(0), ..VerifyOptions::default() });
            emit(out, &json(&report)?)?;
            report.status()
        }
        command => {
            let cfg = load(cli)?;
            init_threads(cfg.threads)?;
            match command {
                Command::Sweep => {
                    let rows = run_sweep(&cfg)?;
                    let mut buf = Vec::new();
                    write_csv(&rows, &mut buf)?;
                    emit(out, &buf)
                }
                Command::Coverage => {
                    let cert = run_coverage(&cfg)?;
                    emit(out, &json(&cert)?)?;
                    certificate_status(&cert)
                }
                Command::Calibrate => emit(out, &json(&run_calibrate(&cfg)?)?),
                Command::DemoSgd => {
                    let run = run_demo(&cfg)?;
                    let mut trace = Vec::new();
                    write_trace(&run.trace, &mut trace)?;
                    let summary = json(&run.summary)?;
                    match out {
                        Some(p) => {
                            std::fs::write(p, &trace)?;
                            std::io::stdout().lock().write_all(&summary)?;
                        }
                        None => {
                            std::io::stdout().lock().write_all(&trace)?;
                            std::io::stderr().lock().write_all(&summary)?;
                        }
                    }
                    Ok(())
                }
                Command::Verify => unreachable!(),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sqlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
