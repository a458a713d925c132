//! `vacimg`: simulate atom-probe scans of a cavity vacuum field, reconstruct
//! the field in 3D, calibrate its amplitude and emit figures.
//!
//! Exit codes: 0 success, 1 runtime or physics error, 2 usage error,
//! 3 degenerate amplitude calibration. Failures print a JSON object on
//! stderr.

mod fitevac;
mod plot;
mod recon;
mod run;
mod selftest;
mod simulate;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "VACIMG_OUT_DIR";

#[derive(Parser)]
#[command(name = "vacimg", version, about = "Single-atom imaging of a cavity vacuum field")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate scan traces from a run configuration.
    Simulate(simulate::Args),
    /// Reconstruct the 3D vacuum intensity from a directory of traces.
    Reconstruct(recon::Args),
    /// Fit the vacuum amplitude to node-to-antinode traces at several atom numbers.
    FitEvac(fitevac::Args),
    /// Check the chain of derived cavity quantities.
    Selftest(selftest::Args),
    /// Render a trace or volume as SVG, or resample it to CSV.
    Plot(plot::Args),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Steady,
    Trajectory,
}

impl From<EngineArg> for vacimg::beamsim::Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Steady => vacimg::beamsim::Engine::SteadyState,
            EngineArg::Trajectory => vacimg::beamsim::Engine::Trajectory,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, kind: "usage".into(), message: message.into() }
    }

    pub fn runtime(kind: &str, message: impl Into<String>) -> Self {
        Self { code: 1, kind: kind.into(), message: message.into() }
    }
}

impl From<vacimg::Error> for CliError {
    fn from(e: vacimg::Error) -> Self {
        Self { code: 1, kind: e.kind().into(), message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime("io", e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::runtime("json", e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// `--out`, then the environment, then the config, then `vacimg-out`.
pub fn output_dir(flag: Option<PathBuf>, from_config: Option<&str>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| from_config.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("vacimg-out"))
}

fn report(err: &CliError) {
    let doc = serde_json::json!({
        "error": { "kind": err.kind, "message": err.message, "exit_code": err.code }
    });
    eprintln!("{doc}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("usage error").trim_start_matches("error: ").to_string();
            report(&CliError::usage(first));
            return ExitCode::from(2);
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Reconstruct(a) => recon::run(a),
        Command::FitEvac(a) => fitevac::run(a),
        Command::Selftest(a) => selftest::run(a),
        Command::Plot(a) => plot::run(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            report(&e);
            ExitCode::from(e.code)
        }
    }
}
