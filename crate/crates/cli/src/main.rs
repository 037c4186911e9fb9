//! `kagome`: spectra, overlap series, Krylov convergence, magnetization
//! curves and shot-allocation studies for small kagome spin clusters.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::output::Out;

#[derive(Parser)]
#[command(name = "kagome", version, about = "Krylov ground-state experiments on kagome star plaquettes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact diagonalization by S^z sector.
    Spectrum(Common),
    /// Overlap series ⟨ψ0|W(k·dt)|ψ0⟩, exact or shot-sampled.
    Overlaps(Common),
    /// UVQPE / ODMD energy convergence over step counts and thresholds.
    Converge(Common),
    /// Magnetization curve from exact and solver sector energies.
    Magnetization(Common),
    /// Overlap error against the F1/F2/F3 shot split.
    Allocation(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Fail {
    pub code: u8,
    pub msg: String,
}

impl Fail {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self { code: 3, msg: msg.into() }
    }

    fn io(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }
}

impl From<kagome_core::Error> for Fail {
    fn from(e: kagome_core::Error) -> Self {
        match e {
            kagome_core::Error::Numerical(_) => Fail::numerical(e.to_string()),
            _ => Fail::validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::io(e.to_string())
    }
}

impl From<csv::Error> for Fail {
    fn from(e: csv::Error) -> Self {
        Fail::io(e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail::io(e.to_string())
    }
}

fn load(common: &Common) -> Result<RunConfig, Fail> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Fail::validation(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Fail::validation(format!("bad config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

type Handler = fn(&RunConfig, &Out) -> Result<(), Fail>;

fn run(cli: Cli) -> Result<(), Fail> {
    let (common, f): (&Common, Handler) = match &cli.command {
        Command::Spectrum(c) => (c, commands::spectrum),
        Command::Overlaps(c) => (c, commands::overlaps),
        Command::Converge(c) => (c, commands::converge),
        Command::Magnetization(c) => (c, commands::magnetization),
        Command::Allocation(c) => (c, commands::allocation),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Fail::validation("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Fail::io(e.to_string()))?;
    }
    let cfg = load(common)?;
    let out = Out::new(&common.out)?;
    f(&cfg, &out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
