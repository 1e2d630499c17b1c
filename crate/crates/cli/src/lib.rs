//! Command-line front end: kernel benchmarks against the double oracle, the
//! four statistical workloads, and CSV pretty-printing.

pub mod apps;
pub mod bench;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mpnum::io::{read_matrix_csv, ResultFormat};
use mpnum::Precision;

pub use apps::{AppArgs, AppName};
pub use bench::{BenchArgs, BenchOp};

/// Largest kernel dimension accepted without `--big`.
pub const MAX_KERNEL_N: usize = 4096;
/// Largest grid side (so `n <= 1600`) accepted by the workloads without `--big`.
pub const MAX_GRID: usize = 40;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] mpnum::Error),
}

impl CliError {
    /// 1 for numerical failures, 2 for usage and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 1,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Debug, Parser)]
#[command(
    name = "mpnum",
    version,
    about = "Mixed-precision kernels and workloads"
)]
pub struct Cli {
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true, env = "MPNUM_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time a kernel over sizes and precisions and measure its error.
    Bench(BenchArgs),
    /// Run a statistical workload end to end.
    App(AppArgs),
    /// Print a CSV matrix in the array display format.
    Print(PrintArgs),
}

#[derive(Debug, Args)]
pub struct PrintArgs {
    pub path: PathBuf,
    #[arg(long, default_value = "double")]
    pub precision: Precision,
}

pub(crate) fn parse_format(s: &str) -> Result<ResultFormat, String> {
    s.parse().map_err(|e: mpnum::Error| e.to_string())
}

/// Runs a parsed command line, writing normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> CliResult<()> {
    // The command may run inside a dedicated pool, so buffer its output.
    let mut buffer = Vec::new();
    let result = run_buffered(cli, &mut buffer);
    write_out(out, &String::from_utf8_lossy(&buffer))?;
    result
}

fn run_buffered(cli: Cli, out: &mut Vec<u8>) -> CliResult<()> {
    match cli.threads {
        Some(0) => usage("--threads must be at least 1"),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {k} threads: {e}")))?;
            pool.install(|| dispatch(cli.command, out))
        }
        None => dispatch(cli.command, out),
    }
}

fn dispatch(command: Command, out: &mut dyn std::io::Write) -> CliResult<()> {
    match command {
        Command::Bench(args) => bench::cmd_bench(&args, out),
        Command::App(args) => apps::cmd_app(&args, out),
        Command::Print(args) => cmd_print(&args, out),
    }
}

/// A file with a single row or column prints as a vector.
pub fn cmd_print(args: &PrintArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let mut a = read_matrix_csv(&args.path, args.precision)?;
    let (r, c) = a.dims();
    if r == 1 || c == 1 {
        a.to_vector();
    }
    write_out(out, &mpnum::array::format(&a))
}

pub(crate) fn write_out(out: &mut dyn std::io::Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|source| {
            CliError::Core(mpnum::Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })
        })
}
