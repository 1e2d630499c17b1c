//! `app`: the statistical workloads, one run per requested precision.
//!
//! Each run writes `summary.json` plus CSV artifacts into `--out`. If any
//! step fails, every file written so far is removed again.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mpnum::io::{read_matrix_csv, write_matrix_csv};
use mpnum::stats::covariance::{exp_cov, grid_locations, sample_gp};
use mpnum::stats::laplace::{self, default_alpha_grid, posterior_grid, ALPHA_TRUE};
use mpnum::stats::pca::synthetic_field;
use mpnum::stats::{
    mala_run, matern_mle, pca_eof, sign_align, GaussianTarget, MalaConfig, NelderMeadConfig, Rng,
    DEFAULT_MLE_INIT,
};
use mpnum::{MPArray, Placement, Precision};
use serde_json::{json, Value};

use crate::{usage, CliError, CliResult, MAX_GRID, MAX_KERNEL_N};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AppName {
    Mala,
    MaternMle,
    Pca,
    Laplace,
}

impl AppName {
    pub fn name(self) -> &'static str {
        match self {
            AppName::Mala => "mala",
            AppName::MaternMle => "matern-mle",
            AppName::Pca => "pca",
            AppName::Laplace => "laplace",
        }
    }
}

#[derive(Debug, Args)]
pub struct AppArgs {
    pub name: AppName,
    #[arg(long, value_delimiter = ',', default_value = "single,double")]
    pub precision: Vec<Precision>,
    #[arg(long, default_value_t = 4)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "mpnum-out")]
    pub out: PathBuf,
    /// Grid side for mala (default 16) and matern-mle (default 30).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Number of line locations for laplace.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Time steps of the pca field.
    #[arg(long, default_value_t = 200)]
    pub rows: usize,
    /// Spatial points of the pca field.
    #[arg(long, default_value_t = 400)]
    pub cols: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Read the pca data matrix from a CSV file instead of simulating it.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// MALA chain length.
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    /// MALA step size.
    #[arg(long, default_value_t = 0.01)]
    pub h: f64,
    /// Accept sizes above the desk-scale limits.
    #[arg(long)]
    pub big: bool,
}

/// Files written by one invocation, deleted unless [`Artifacts::keep`] runs.
struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
    keep: bool,
}

impl Artifacts {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|source| {
            CliError::Core(mpnum::Error::Io {
                path: dir.to_path_buf(),
                source,
            })
        })?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            keep: false,
        })
    }

    fn matrix(&mut self, name: &str, a: &MPArray) -> CliResult<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        Ok(write_matrix_csv(&path, a)?)
    }

    fn json(&mut self, name: &str, value: &Value) -> CliResult<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        let text = serde_json::to_string_pretty(value).map_err(mpnum::Error::from)? + "\n";
        fs::write(&path, text).map_err(|source| CliError::Core(mpnum::Error::Io { path, source }))
    }
}

impl Drop for Artifacts {
    fn drop(&mut self) {
        if !self.keep {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn matrix(values: &[f64], rows: usize, cols: usize) -> MPArray {
    MPArray::from_doubles(values, rows, cols, Precision::Double, Placement::Cpu)
        .expect("rows x cols buffer")
}

const MALA_GRID: usize = 16;
const MLE_GRID: usize = 30;

fn check_grid(args: &AppArgs, default: usize) -> CliResult<usize> {
    let g = args.grid.unwrap_or(default);
    if g < 2 {
        return usage("--grid must be at least 2");
    }
    if g > MAX_GRID && !args.big {
        return usage(format!(
            "--grid {g} exceeds {MAX_GRID}; pass --big to allow it"
        ));
    }
    Ok(g)
}

fn validate(args: &AppArgs) -> CliResult<()> {
    if args.precision.is_empty() {
        return usage("--precision needs at least one value");
    }
    match args.name {
        AppName::Laplace => {
            if args.n < 3 {
                return usage("--n must be at least 3");
            }
            if args.n > MAX_GRID * MAX_GRID && !args.big {
                return usage(format!(
                    "--n {} exceeds {}; pass --big to allow it",
                    args.n,
                    MAX_GRID * MAX_GRID
                ));
            }
        }
        AppName::Pca => {
            if args.input.is_none() && (args.rows.max(args.cols) > MAX_KERNEL_N && !args.big) {
                return usage(format!(
                    "pca dimensions exceed {MAX_KERNEL_N}; pass --big to allow it"
                ));
            }
        }
        AppName::Mala => {
            check_grid(args, MALA_GRID)?;
            if !(args.h > 0.0 && args.h.is_finite()) {
                return usage("--h must be positive");
            }
        }
        AppName::MaternMle => {
            check_grid(args, MLE_GRID)?;
        }
    }
    Ok(())
}

/// Runs the named workload and returns its summary. Artifacts are kept only
/// on success.
pub fn run_app(args: &AppArgs) -> CliResult<Value> {
    validate(args)?;
    let mut files = Artifacts::new(&args.out)?;
    let summary = match args.name {
        AppName::Mala => mala(args, &mut files)?,
        AppName::MaternMle => matern(args, &mut files)?,
        AppName::Pca => pca(args, &mut files)?,
        AppName::Laplace => laplace_app(args, &mut files)?,
    };
    files.json("summary.json", &summary)?;
    files.keep = true;
    Ok(summary)
}

pub fn cmd_app(args: &AppArgs, out: &mut dyn std::io::Write) -> CliResult<()> {
    let summary = run_app(args)?;
    let text = serde_json::to_string_pretty(&summary).map_err(mpnum::Error::from)? + "\n";
    crate::write_out(out, &text)
}

/// Gaussian target `N(0, exp(-D/0.5))` on a `side x side` unit grid,
/// preconditioned by the shorter-range `exp(-D/0.05)`.
pub fn mala_problem(
    side: usize,
    h: f64,
    iters: usize,
    seed: u64,
) -> mpnum::Result<(GaussianTarget, MalaConfig)> {
    let (_, d) = grid_locations(side)?;
    let target = GaussianTarget {
        mu: vec![0.0; side * side],
        sigma: exp_cov(&d, 1.0, 0.5, Precision::Double)?,
    };
    let cfg = MalaConfig {
        h,
        m: exp_cov(&d, 1.0, 0.05, Precision::Double)?,
        iters,
        seed,
    };
    Ok((target, cfg))
}

/// One field drawn from the exponential covariance with `sigma2 = 1`,
/// `a = 0.03` on a `side x side` grid, with its distance matrix.
pub fn mle_problem(side: usize, seed: u64) -> mpnum::Result<(MPArray, MPArray)> {
    let (_, d) = grid_locations(side)?;
    let cov = exp_cov(&d, MLE_TRUTH[0], MLE_TRUTH[1], Precision::Double)?;
    let z = sample_gp(&cov, &mut Rng::new(seed))?;
    Ok((z, d))
}

/// `(sigma2, a)` used to simulate the likelihood workload.
pub const MLE_TRUTH: [f64; 2] = [1.0, 0.03];

/// Rank-3 synthetic field with noise level 0.1.
pub fn pca_problem(rows: usize, cols: usize, seed: u64) -> MPArray {
    synthetic_field(rows, cols, 3, 0.1, seed)
}

fn mala(args: &AppArgs, files: &mut Artifacts) -> CliResult<Value> {
    let side = check_grid(args, MALA_GRID)?;
    let n = side * side;
    let (target, cfg) = mala_problem(side, args.h, args.iters, args.seed)?;
    let mut runs = Vec::new();
    for &p in &args.precision {
        let run = mala_run(&target, &cfg, p)?;
        files.matrix(&format!("trace_{p}.csv"), &matrix(&run.trace, n, run.iters))?;
        runs.push(json!({
            "precision": p,
            "accept_rate": run.accept_rate(),
            "accepted": run.accepted,
            "first_proposal_max_abs": run.first_proposal.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            "elapsed_seconds": run.elapsed_seconds,
        }));
    }
    Ok(json!({
        "app": "mala",
        "seed": args.seed,
        "n": n,
        "iters": args.iters,
        "h": args.h,
        "runs": runs,
    }))
}

/// Fits `(sigma2, a)` of an exponential covariance to one simulated field.
fn matern(args: &AppArgs, files: &mut Artifacts) -> CliResult<Value> {
    let side = check_grid(args, MLE_GRID)?;
    let (z, d) = mle_problem(side, args.seed)?;
    files.matrix("field.csv", &z)?;
    let z = z.to_doubles();
    let config = NelderMeadConfig::for_mle();
    let mut runs = Vec::new();
    for &p in &args.precision {
        let fit = matern_mle(&z, &d, p, DEFAULT_MLE_INIT, &config)?;
        runs.push(serde_json::to_value(&fit).map_err(mpnum::Error::from)?);
    }
    Ok(json!({
        "app": "matern-mle",
        "seed": args.seed,
        "n": side * side,
        "truth": { "sigma2": MLE_TRUTH[0], "a": MLE_TRUTH[1], "nu": 0.5 },
        "runs": runs,
    }))
}

fn pca(args: &AppArgs, files: &mut Artifacts) -> CliResult<Value> {
    let x = match &args.input {
        Some(path) => read_matrix_csv(path, Precision::Double)?,
        None => pca_problem(args.rows, args.cols, args.seed),
    };
    let fits = args
        .precision
        .iter()
        .map(|&p| pca_eof(&x, args.k, p))
        .collect::<mpnum::Result<Vec<_>>>()?;
    // Orient every run like the highest-precision one.
    let best = (0..fits.len())
        .max_by_key(|&i| fits[i].precision)
        .expect("non-empty");
    let reference = fits[best].eofs.clone();
    let mut runs = Vec::new();
    for fit in &fits {
        let p = fit.precision;
        let eofs = sign_align(&fit.eofs, &reference.convert(p))?;
        files.matrix(&format!("eofs_{p}.csv"), &eofs)?;
        files.matrix(&format!("scores_{p}.csv"), &fit.scores)?;
        runs.push(json!({
            "precision": p,
            "pct_var": fit.pct_var,
            "elapsed_seconds": fit.elapsed_seconds,
        }));
    }
    let (rows, cols) = x.dims();
    Ok(json!({
        "app": "pca",
        "seed": args.seed,
        "rows": rows,
        "cols": cols,
        "k": args.k,
        "runs": runs,
    }))
}

fn laplace_app(args: &AppArgs, files: &mut Artifacts) -> CliResult<Value> {
    let data = laplace::generate_data(args.n, args.seed)?;
    files.matrix(
        "observations.csv",
        &MPArray::from_vector(&data.y, Precision::Double),
    )?;
    let grid = default_alpha_grid();
    let mut runs = Vec::new();
    for &p in &args.precision {
        let post = posterior_grid(&data.d, &data.y, &grid, p)?;
        let table: Vec<f64> = post.alpha.iter().chain(&post.posterior).copied().collect();
        files.matrix(
            &format!("posterior_{p}.csv"),
            &matrix(&table, grid.len(), 2),
        )?;
        runs.push(json!({
            "precision": p,
            "argmax": post.argmax(),
            "integral": post.integral(),
            "posterior": post.posterior,
            "elapsed_seconds": post.elapsed_seconds,
        }));
    }
    Ok(json!({
        "app": "laplace",
        "seed": args.seed,
        "n": args.n,
        "alpha_true": ALPHA_TRUE,
        "alpha": grid,
        "runs": runs,
    }))
}
