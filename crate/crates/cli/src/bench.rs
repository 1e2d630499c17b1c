//! `bench`: paired timing and accuracy runs for the dense kernels.
//!
//! Inputs are generated once per `(op, n)` in double and rounded to each
//! precision, so every precision sees the same matrix. Errors are relative
//! Frobenius distances to the double result.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use mpnum::io::{write_results, write_results_to, BenchRecord, ResultFormat};
use mpnum::linalg::{backsolve, chol, crossprod, gemm, rel_frobenius_error, svd, GemmParams};
use mpnum::stats::covariance::{distance_matrix, exp_cov, grid_locations};
use mpnum::stats::Rng;
use mpnum::{MPArray, Placement, Precision};

use crate::{usage, CliResult, MAX_KERNEL_N};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchOp {
    Chol,
    Crossprod,
    Backsolve,
    Gemm,
    Svd,
}

impl BenchOp {
    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Chol => "chol",
            BenchOp::Crossprod => "crossprod",
            BenchOp::Backsolve => "backsolve",
            BenchOp::Gemm => "gemm",
            BenchOp::Svd => "svd",
        }
    }

    /// Ops whose half-precision runs are meaningful by default.
    pub fn allows_half(self) -> bool {
        matches!(self, BenchOp::Crossprod | BenchOp::Gemm)
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub op: BenchOp,
    #[arg(long, value_delimiter = ',', default_value = "256,512")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "single,double")]
    pub precisions: Vec<Precision>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Results file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = crate::parse_format)]
    pub format: ResultFormat,
    /// Accept sizes above the desk-scale limit.
    #[arg(long)]
    pub big: bool,
    /// Permit half precision for chol, backsolve and svd.
    #[arg(long)]
    pub allow_half_all: bool,
}

/// Double-precision inputs for one `(op, n)` pair.
#[derive(Debug, Clone)]
pub struct BenchInputs {
    pub op: BenchOp,
    pub a: MPArray,
    pub b: Option<MPArray>,
}

fn uniform_matrix(rng: &mut Rng, n: usize) -> MPArray {
    MPArray::from_doubles(
        &rng.uniform_vec(n * n),
        n,
        n,
        Precision::Double,
        Placement::Cpu,
    )
    .expect("n x n buffer")
}

/// Exponential covariance (`a = 0.1`) on the first `n` points of the
/// smallest square unit grid holding them.
pub fn chol_input(n: usize) -> mpnum::Result<MPArray> {
    let side = ((n as f64).sqrt().ceil() as usize).max(2);
    let (points, _) = grid_locations(side)?;
    exp_cov(&distance_matrix(&points[..n]), 1.0, 0.1, Precision::Double)
}

impl BenchInputs {
    pub fn generate(op: BenchOp, n: usize, seed: u64) -> mpnum::Result<Self> {
        let mut rng = Rng::new(seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let (a, b) = match op {
            BenchOp::Crossprod | BenchOp::Svd => (uniform_matrix(&mut rng, n), None),
            BenchOp::Gemm => {
                let a = uniform_matrix(&mut rng, n);
                (a, Some(uniform_matrix(&mut rng, n)))
            }
            BenchOp::Chol => (chol_input(n)?, None),
            BenchOp::Backsolve => (chol(&chol_input(n)?)?, Some(uniform_matrix(&mut rng, n))),
        };
        Ok(BenchInputs { op, a, b })
    }

    pub fn convert(&self, p: Precision) -> BenchInputs {
        BenchInputs {
            op: self.op,
            a: self.a.convert(p),
            b: self.b.as_ref().map(|b| b.convert(p)),
        }
    }

    /// Runs the kernel on inputs already held at the target precision.
    /// For `svd` the output is the vector of singular values.
    pub fn run(&self) -> mpnum::Result<MPArray> {
        let b = || self.b.as_ref().expect("second operand");
        match self.op {
            BenchOp::Crossprod => crossprod(&self.a, None),
            BenchOp::Gemm => {
                let n = self.a.rows();
                let mut c = MPArray::zeros_matrix(n, n, self.a.precision());
                gemm(&self.a, b(), &mut c, GemmParams::default())?;
                Ok(c)
            }
            BenchOp::Chol => chol(&self.a),
            BenchOp::Backsolve => backsolve(&self.a, b()),
            BenchOp::Svd => svd(&self.a, 0, 0).map(|r| r.d),
        }
    }
}

fn median(times: &mut [f64]) -> f64 {
    times.sort_by(f64::total_cmp);
    let mid = times.len() / 2;
    if times.len().is_multiple_of(2) {
        0.5 * (times[mid - 1] + times[mid])
    } else {
        times[mid]
    }
}

/// Benchmarks one `(op, n)` pair at each precision.
pub fn bench_size(
    op: BenchOp,
    n: usize,
    precisions: &[Precision],
    reps: usize,
    seed: u64,
) -> mpnum::Result<Vec<BenchRecord>> {
    let inputs = BenchInputs::generate(op, n, seed)?;
    let reference = inputs.run()?;
    precisions
        .iter()
        .map(|&p| {
            let prepared = inputs.convert(p);
            let mut times = Vec::with_capacity(reps);
            let mut output = None;
            for _ in 0..reps {
                let start = Instant::now();
                let result = prepared.run()?;
                times.push(start.elapsed().as_secs_f64());
                output = Some(result);
            }
            let output = output.expect("reps >= 1");
            Ok(BenchRecord {
                op: op.name().to_string(),
                n,
                precision: p,
                placement: Placement::Cpu,
                reps,
                median_seconds: median(&mut times),
                rel_frob_err: rel_frobenius_error(&output, &reference)?,
            })
        })
        .collect()
}

pub fn validate(args: &BenchArgs) -> CliResult<()> {
    if args.reps == 0 {
        return usage("--reps must be at least 1");
    }
    if args.sizes.is_empty() || args.precisions.is_empty() {
        return usage("--sizes and --precisions need at least one value");
    }
    if let Some(&n) = args.sizes.iter().find(|&&n| n < 2) {
        return usage(format!("size {n} is below the minimum of 2"));
    }
    if !args.big {
        if let Some(&n) = args.sizes.iter().find(|&&n| n > MAX_KERNEL_N) {
            return usage(format!(
                "size {n} exceeds {MAX_KERNEL_N}; pass --big to allow it"
            ));
        }
    }
    if args.precisions.contains(&Precision::Half) && !args.op.allows_half() && !args.allow_half_all
    {
        return usage(format!(
            "half precision is restricted to crossprod and gemm (requested for {}); pass --allow-half-all to override",
            args.op.name()
        ));
    }
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    validate(args)?;
    let mut records = Vec::new();
    for &n in &args.sizes {
        let batch = bench_size(args.op, n, &args.precisions, args.reps, args.seed)?;
        for r in &batch {
            eprintln!(
                "{} n={} {}: median {:.4e} s, rel err {:.3e}",
                r.op, r.n, r.precision, r.median_seconds, r.rel_frob_err
            );
        }
        records.extend(batch);
    }
    match &args.out {
        Some(path) => write_results(path, &records, args.format)?,
        None => write_results_to(out, &records, args.format)?,
    }
    Ok(())
}
