//! Command-line front end: `feshrg run|verify|scan|decay`.

pub mod commands;
pub mod config;

use crate::error::Error;
use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_OTHER: i32 = 2;
pub const EXIT_PAIR_INVALID: i32 = 10;
pub const EXIT_BALL_VIOLATION: i32 = 11;
pub const EXIT_SERIES_DIVERGED: i32 = 12;
pub const EXIT_MAX_ITERS: i32 = 13;
pub const EXIT_USAGE: i32 = 64;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::PairInvalid(_) => EXIT_PAIR_INVALID,
        Error::BallViolation(_) => EXIT_BALL_VIOLATION,
        Error::SeriesDiverged { .. } => EXIT_SERIES_DIVERGED,
        Error::MaxItersExceeded(_) => EXIT_MAX_ITERS,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_OTHER,
    }
}

pub fn error_name(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "Config",
        Error::GridMismatch(_) => "GridMismatch",
        Error::Symmetry(_) => "Symmetry",
        Error::KernelMissing(..) => "KernelMissing",
        Error::Truncation(_) => "Truncation",
        Error::PairInvalid(_) => "PairInvalid",
        Error::SeriesDiverged { .. } => "SeriesDiverged",
        Error::BallViolation(_) => "BallViolation",
        Error::NewtonDiverged(_) => "NewtonDiverged",
        Error::OutOfDomain(_) => "OutOfDomain",
        Error::MaxItersExceeded(_) => "MaxItersExceeded",
        Error::DegenerateGroundState(_) => "DegenerateGroundState",
        Error::ContourCrossesSpectrum(_) => "ContourCrossesSpectrum",
        Error::TrackingLost(_) => "TrackingLost",
        Error::WindowTooSmall(_) => "WindowTooSmall",
        Error::Checkpoint(_) => "Checkpoint",
        Error::Linalg(_) => "Linalg",
        Error::Io(_) => "Io",
    }
}

#[derive(Parser, Debug)]
#[command(name = "feshrg", version, about = "Smooth Feshbach renormalization group for atom-photon models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for scans (default: FESHRG_JOBS or 1).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground state of one configuration.
    Run {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory to resume from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Highest checkpoint level to load when resuming.
        #[arg(long, requires = "resume")]
        resume_level: Option<usize>,
    },
    /// Module invariant suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// fock, kernels, wick, feshbach, rg or all.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// One run per node of a circle in g, theta or alpha.
    Scan {
        #[command(flatten)]
        common: Common,
    },
    /// Spatial decay diagnostics (hydrogen mode).
    Decay {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Error> {
    let path = common.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    Ok((cfg, out))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Run { common, resume, resume_level } => {
            let (cfg, out) = load(&common)?;
            let r = commands::cmd_run(&cfg, &out, resume.as_deref().map(|p: &Path| (p, resume_level)))?;
            print_json(&r.json);
            Ok(EXIT_OK)
        }
        Command::Verify { common, suite } => {
            let seed = match &common.config {
                Some(p) => common.seed.unwrap_or(RunConfig::load(p)?.seed),
                None => common.seed.unwrap_or(0),
            };
            let rep = commands::cmd_verify(&suite, seed)?;
            if let Some(out) = &common.out {
                commands::write_verify(&rep, out)?;
            }
            print_json(&serde_json::to_value(&rep).unwrap_or_default());
            for ch in rep.checks.iter().filter(|c| !c.pass) {
                eprintln!("FAILED {} (value {:e}, bound {:e})", ch.name, ch.value, ch.bound);
            }
            Ok(if rep.pass { EXIT_OK } else { EXIT_VERIFY_FAILED })
        }
        Command::Scan { common } => {
            let (cfg, out) = load(&common)?;
            let rep = commands::cmd_scan(&cfg, &out, commands::resolve_jobs(common.jobs))?;
            print_json(&serde_json::to_value(&rep).unwrap_or_default());
            Ok(EXIT_OK)
        }
        Command::Decay { common } => {
            let (cfg, out) = load(&common)?;
            print_json(&commands::cmd_decay(&cfg, &out)?);
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
