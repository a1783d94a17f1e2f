//! `fbd` batch front end.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 admissibility
//! failure under `--strict`, 3 solver or I/O error, 4 sweep member failure
//! (a partial report is still written).

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "fbd", version, about = "Single-interface scheme for bilinear forward-backward diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; the built-in depinning preset when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Abort on the first admissibility violation.
    #[arg(long, global = true)]
    strict: bool,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Seed for the Hölder sampling of `sweep`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run the scheme and write the interface curve, snapshots and diagnostics.
    Simulate,
    /// Split p into regular part and fluctuations at the requested times.
    Decompose,
    /// Run an eps-sweep and write convergence diagnostics.
    Sweep,
    /// Tabulate kernel-power gaps and the Cauchy-weight integrals.
    Kernelcheck,
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn new(code: u8, msg: String) -> Self {
        Self { code, msg }
    }

    pub fn config(msg: String) -> Self {
        Self::new(1, msg)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(3, format!("{}: {e}", path.display()))
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::preset(),
    };
    if cli.strict {
        cfg.experiment.strict = true;
    }
    if let Some(s) = cli.seed {
        cfg.sweep.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg, &cli.out),
        Command::Decompose => commands::decompose(&cfg, &cli.out),
        Command::Sweep => commands::sweep(&cfg, &cli.out),
        Command::Kernelcheck => commands::kernelcheck(&cfg, &cli.out),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| dispatch(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(3)
        }
    }
}
