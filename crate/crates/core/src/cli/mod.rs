//! Command-line front end.
//!
//! ```text
//! wxrisk fit-gev     --config run.json --out out/
//! wxrisk fit-spatial --config run.json --out out/
//! wxrisk simulate    --config run.json --out out/ [--seed N]
//! wxrisk price       --config run.json --out out/ [--seed N]
//! wxrisk study       --config run.json --out out/ [--seed N]
//! ```
//!
//! Exit codes: 0 success, 2 configuration, 3 data, 4 numerical or fit failure.

pub mod commands;
pub mod config;
pub mod study;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "wxrisk", version, about = "Price extreme-event weather derivatives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a GEV to each station's seasonal maxima.
    FitGev(CommonArgs),
    /// Fit and compare Schlather dependence models.
    FitSpatial(CommonArgs),
    /// Simulate joint extreme events.
    Simulate(CommonArgs),
    /// Price a portfolio of contracts with covariance-share risk loads.
    Price(CommonArgs),
    /// Run the marginal-variance simulation study.
    Study(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Error {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::Data(_) | Error::Parse { .. } | Error::Io { .. } | Error::Shape(_) => 3,
            Error::Fit(_) | Error::Numerical(_) | Error::Domain(_) => 4,
        }
    }
}

/// Runs a parsed command, returning the files written.
pub fn execute(cli: &Cli) -> crate::Result<Vec<PathBuf>> {
    let (args, run): (&CommonArgs, fn(&RunConfig, &std::path::Path) -> crate::Result<Vec<PathBuf>>) =
        match &cli.command {
            Command::FitGev(a) => (a, commands::fit_gev_cmd),
            Command::FitSpatial(a) => (a, commands::fit_spatial_cmd),
            Command::Simulate(a) => (a, commands::simulate_cmd),
            Command::Price(a) => (a, commands::price_cmd),
            Command::Study(a) => (a, commands::study_cmd),
        };
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = Some(seed);
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    run(&cfg, &args.out)
}

/// Entry point for the binary; returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
