//! Command-line parsing and dispatch.

use std::path::PathBuf;

use clap::Parser;

use crate::config::{ExperimentConfig, Overrides};
use crate::error::{CliError, CliResult, EXIT_ASSERTION, EXIT_OK};
use crate::suites::{run, Prepared, Suite};

#[derive(Debug, Parser)]
#[command(name = "heatlens", version, about = "Heat-kernel embeddings, pull-back metrics and non-collapse diagnostics")]
pub struct Args {
    /// Suite to run.
    #[arg(value_enum)]
    pub suite: Suite,
    /// Experiment configuration (JSON).
    #[arg(long, short)]
    pub config: PathBuf,
    /// Comma-separated time grid, replacing `t_grid`.
    #[arg(long, value_delimiter = ',')]
    pub t_grid: Option<Vec<f64>>,
    /// Retained eigenpairs, replacing `mode_count`.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Output directory, replacing `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "HEATLENS_THREADS";

pub fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("{THREADS_ENV}: expected a positive integer, found `{raw}`")))?;
    if n == 0 {
        return Err(CliError::usage(format!("{THREADS_ENV}: must be positive")));
    }
    // A second initialisation in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(args: &Args) -> CliResult<i32> {
    configure_threads()?;
    let mut cfg = ExperimentConfig::load(&args.config)?;
    cfg.apply(&Overrides { t_grid: args.t_grid.clone(), mode_count: args.modes, output_dir: args.out.clone() });
    let prepared = Prepared::new(cfg)?;
    let outcome = run(args.suite, &prepared)?;
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    if outcome.passed() {
        Ok(EXIT_OK)
    } else {
        for f in &outcome.failures {
            eprintln!("assertion failed: {f}");
        }
        Ok(EXIT_ASSERTION)
    }
}

/// Parses `argv`, runs, and returns the exit status.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => crate::error::EXIT_USAGE,
            };
        }
    };
    match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("heatlens: {e}");
            e.exit_code()
        }
    }
}
