//! Gaussian negative log-likelihood, Nelder-Mead, and Matérn maximum
//! likelihood.

use std::time::Instant;

use serde::Serialize;

use crate::array::{self, diag, transpose, MPArray, UnaryOp};
use crate::error::{Error, Result};
use crate::linalg::{chol, forwardsolve};
use crate::precision::Precision;

use super::covariance::{matern_cov, MaternParams};

/// Diagonal jitter for reduced-precision factorizations.
///
/// Starts at `initial` and is multiplied by `factor` after each failed
/// Cholesky until it would exceed `max`. Double precision uses no jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterPolicy {
    pub initial: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy {
            initial: 1e-6,
            factor: 10.0,
            max: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NllValue {
    pub nll: f64,
    /// Jitter that was finally added to the diagonal (0 at double).
    pub jitter: f64,
}

fn add_to_diagonal(v: &mut MPArray, x: f64) -> Result<()> {
    for i in 0..v.rows() {
        let d = v.get_at(i, i)?;
        v.set_at(i, i, d + x)?;
    }
    Ok(())
}

/// `-log N(z; 0, cov)` with the covariance stored at `precision`.
///
/// `cov` is rounded to `precision`; below double a diagonal jitter is added,
/// escalating per `jitter` if the factorization still fails.
pub fn gaussian_nll(
    z: &[f64],
    cov: &MPArray,
    precision: Precision,
    jitter: JitterPolicy,
) -> Result<NllValue> {
    let n = z.len();
    if cov.dims() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "covariance {:?} for {n} observations",
            cov.dims()
        )));
    }
    let base = cov.convert(precision);
    let mut amount = if precision == Precision::Double {
        0.0
    } else {
        jitter.initial
    };
    let u = loop {
        let mut v = base.clone();
        if amount > 0.0 {
            add_to_diagonal(&mut v, amount)?;
        }
        match chol(&v) {
            Ok(u) => break u,
            Err(e @ Error::NotPositiveDefinite { .. }) => {
                let next = amount * jitter.factor;
                if amount == 0.0 || next > jitter.max * (1.0 + 1e-9) {
                    return Err(e);
                }
                amount = next;
            }
            Err(e) => return Err(e),
        }
    };
    let log_det = 2.0 * array::sum(&array::ew_unary(UnaryOp::Log, &diag(&u)?)?)?;
    let zp = MPArray::from_vector(z, precision);
    let w = forwardsolve(&transpose(&u)?, &zp)?;
    let quad = array::square_sum(&w)?;
    let nll = 0.5 * quad + 0.5 * log_det + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Ok(NllValue {
        nll,
        jitter: amount,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadConfig {
    pub max_iter: usize,
    /// Stop once the standard deviation of the vertex values drops below this.
    pub tol: f64,
    /// Initial simplex edge; `None` uses `0.1 max|x0|` (or 0.1 at the origin).
    pub step: Option<f64>,
    /// Optional bound on the simplex size (max-norm distance of every vertex
    /// from the best), required in addition to `tol`. The value spread alone
    /// can vanish on a simplex straddling the minimum symmetrically.
    pub xtol: Option<f64>,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig {
            max_iter: 1000,
            tol: 1e-8,
            step: None,
            xtol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when `max_iter` was reached first.
    pub converged: bool,
}

/// Derivative-free simplex minimization with the standard coefficients
/// (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
///
/// NaN objective values are treated as `+inf`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], config: &NelderMeadConfig) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let k = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let step = config.step.unwrap_or_else(|| {
        let m = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if m > 0.0 {
            0.1 * m
        } else {
            0.1
        }
    });

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..k {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let point = |c: &[f64], d: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(d).map(|(ci, di)| ci + t * (di - ci)).collect()
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let values: Vec<f64> = simplex.iter().map(|v| v.1).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let spread =
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if k == 0 || (spread < config.tol && config.xtol.is_none_or(|t| size <= t)) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; k];
        for (x, _) in &simplex[..k] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / k as f64;
            }
        }
        let (worst, f_worst) = simplex[k].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[k - 1].1;

        let xr = point(&centroid, &worst, -1.0);
        let fr = eval(&xr);
        if fr < f_best {
            let xe = point(&centroid, &worst, -2.0);
            let fe = eval(&xe);
            simplex[k] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[k] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < f_worst {
            let xc = point(&centroid, &worst, -0.5);
            let fc = eval(&xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = point(&centroid, &worst, 0.5);
            let fc = eval(&xc);
            (xc, fc, fc < f_worst)
        };
        if accept {
            simplex[k] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            v.0 = point(&best, &v.0, 0.5);
            v.1 = eval(&v.0);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        f,
        iterations,
        evaluations,
        converged,
    }
}

/// Fitted Matérn parameters, reported as `(sigma2, a, nu)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MleResult {
    pub precision: Precision,
    pub sigma2: f64,
    pub a: f64,
    pub nu: f64,
    pub nll: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub elapsed_seconds: f64,
}

impl MleResult {
    pub fn theta(&self) -> [f64; 3] {
        [self.sigma2, self.a, self.nu]
    }
}

/// Starting point `(log a, log sigma2)` used by the reference workflow.
pub const DEFAULT_MLE_INIT: [f64; 2] = [1.5, -0.3];

/// Stopping tolerance for likelihood fits. Tighter values let single
/// precision rounding in the nll decide late simplex moves, so the two
/// precisions stop a few iterations apart.
pub const MLE_TOL: f64 = 1e-4;

impl NelderMeadConfig {
    pub fn for_mle() -> Self {
        NelderMeadConfig {
            tol: MLE_TOL,
            ..Default::default()
        }
    }
}

/// Maximizes the Gaussian likelihood over `(log a, log sigma2)` with `nu`
/// fixed at 0.5.
///
/// Parameter values whose covariance cannot be factored even with jitter
/// score `+inf`, so the simplex steps away from them.
pub fn matern_mle(
    z: &[f64],
    d: &MPArray,
    precision: Precision,
    init: [f64; 2],
    config: &NelderMeadConfig,
) -> Result<MleResult> {
    let start = Instant::now();
    let mut failure = None;
    let objective = |pars: &[f64]| {
        let params = MaternParams {
            nu: 0.5,
            a: pars[0].exp(),
            sigma2: pars[1].exp(),
        };
        let value = matern_cov(d, &params, Precision::Double)
            .and_then(|cov| gaussian_nll(z, &cov, precision, JitterPolicy::default()));
        match value {
            Ok(v) => v.nll,
            Err(e) if e.is_numerical() => f64::INFINITY,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let fit = nelder_mead(objective, &init, config);
    if let Some(e) = failure {
        return Err(e);
    }
    if !fit.f.is_finite() {
        return Err(Error::NoConvergence {
            iterations: fit.iterations,
        });
    }
    Ok(MleResult {
        precision,
        sigma2: fit.x[1].exp(),
        a: fit.x[0].exp(),
        nu: 0.5,
        nll: fit.f,
        iterations: fit.iterations,
        evaluations: fit.evaluations,
        converged: fit.converged,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
