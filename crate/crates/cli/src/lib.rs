//! Command-line workflows: simulate, build-map, localize, fuse, benchmark.
//!
//! Every option can come from a flag or from the JSON file given with
//! `--config`, whose keys are the long flag names in snake case. Flags win
//! over the file and the file wins over built-in defaults.

mod benchmark;
mod fuse;
mod io;
mod localize;
mod options;
mod simulate;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

pub use options::{BenchmarkOptions, BuildMapOptions, FuseOptions, LocalizeOptions, SimulateOptions, TrajectoryKind};

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "MCLOC_LOG";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, configuration or input files. Exit code 2.
    #[error("{0}")]
    Config(String),
    /// Failure while doing the work. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub(crate) fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub(crate) fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "mcloc", version, about = "Multi-camera visual localization against sparse 3D maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene, map, query frames, odometry and priors.
    Simulate(SimulateOptions),
    /// Rebuild the map of a simulated scene, optionally with product quantization.
    BuildMap(BuildMapOptions),
    /// Localize query frames against a map.
    Localize(LocalizeOptions),
    /// Fuse localization results with odometry into a trajectory.
    Fuse(FuseOptions),
    /// Tabulate localization errors against ground truth.
    Benchmark(BenchmarkOptions),
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Simulate(o) => simulate::run(o),
        Command::BuildMap(o) => simulate::run_build_map(o),
        Command::Localize(o) => localize::run(o),
        Command::Fuse(o) => fuse::run(o),
        Command::Benchmark(o) => benchmark::run(o),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
