//! Command-line front end: `solve`, `sweep`, `simulate`, `verify` and
//! `blocktime`, reading a flat JSON config and writing JSON or CSV reports.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod blocktime;
mod config;
mod report;
mod simulate;
mod solve;
mod sweep;
mod verify;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Dex, Family, Format, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_VIABLE: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "blockclear", version, about = "Equilibrium solver and simulator for block-by-block DEX clearing with priority-fee auctions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the market at a fixed M; add the entry equilibrium when C is set
    Solve(Flags),
    /// Sweep exactly one of M, T, C or N and tabulate the equilibrium
    Sweep(Flags),
    /// Monte Carlo simulation of blocks at the zero-profit depth
    Simulate(Flags),
    /// Check closed forms and simulation against each other
    Verify(Flags),
    /// Cutoff, limiting liquidity and shutdown time against block time
    Blocktime(Flags),
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// JSON config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// RNG seed; drawn from entropy and echoed to stderr when absent
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (1 runs sequentially; default uses every core)
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of informed traders
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Inclusive range of M to sweep, e.g. 2..50
    #[arg(long = "M-range", value_parser = parse_range)]
    pub m_range: Option<(usize, usize)>,
    /// Comma-separated block times
    #[arg(long = "T-grid", value_delimiter = ',')]
    pub t_grid: Option<Vec<f64>>,
    /// Information cost; a comma-separated list makes it the sweep axis
    #[arg(long = "C", value_delimiter = ',')]
    pub c: Option<Vec<f64>>,
    /// Noise mass; a comma-separated list makes it the sweep axis
    #[arg(long = "N", value_delimiter = ',')]
    pub n: Option<Vec<f64>>,
    /// Number of simulated blocks
    #[arg(long = "n-blocks")]
    pub n_blocks: Option<u64>,
    /// Per-trader CSV trace of every simulated block
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once("..")
        .or_else(|| s.split_once(':'))
        .ok_or_else(|| format!("expected LO..HI, got `{s}`"))?;
    let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok((p(lo)?, p(hi.trim_start_matches('='))?))
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Run(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Run(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<blockclear_core::Error> for CliError {
    fn from(e: blockclear_core::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

/// What a command produced.
pub(crate) struct Outcome {
    /// JSON or CSV report; goes to `--out` when given, else stdout.
    pub report: String,
    /// Verdict lines always printed to stdout. When present the report is
    /// only written with `--out`.
    pub verdicts: Option<String>,
    pub code: i32,
    pub note: Option<String>,
}

impl Outcome {
    pub fn report(report: String, code: i32) -> Self {
        Self { report, verdicts: None, code, note: None }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    let (flags, needs_seed) = match &cli.command {
        Command::Simulate(f) | Command::Verify(f) => (f, true),
        Command::Solve(f) | Command::Sweep(f) | Command::Blocktime(f) => (f, false),
    };
    let mut cfg = match RunConfig::load(flags) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            return EXIT_CONFIG;
        }
    };
    if needs_seed && cfg.seed.is_none() {
        let seed = rand::random::<u64>();
        let _ = writeln!(stderr, "seed: {seed}");
        cfg.seed = Some(seed);
    }
    let result = match &cli.command {
        Command::Solve(_) => solve::run(&cfg),
        Command::Sweep(_) => sweep::run(&cfg),
        Command::Simulate(_) => simulate::run(&cfg),
        Command::Verify(_) => verify::run(&cfg),
        Command::Blocktime(_) => blocktime::run(&cfg),
    };
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(v) = &out.verdicts {
        let _ = write!(stdout, "{v}");
    }
    match &cfg.out {
        Some(path) => {
            if let Err(e) = config::write_file(path, &out.report) {
                let _ = writeln!(stderr, "{e}");
                return EXIT_CONFIG;
            }
        }
        None if out.verdicts.is_none() => {
            let _ = write!(stdout, "{}", out.report);
        }
        None => {}
    }
    if let Some(n) = &out.note {
        let _ = writeln!(stderr, "{n}");
    }
    out.code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("2..50"), Ok((2, 50)));
        assert_eq!(parse_range("2..=50"), Ok((2, 50)));
        assert_eq!(parse_range("3:9"), Ok((3, 9)));
        assert!(parse_range("7").is_err());
    }
}
