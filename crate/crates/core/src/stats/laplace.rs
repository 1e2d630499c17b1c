//! Laplace approximation for a latent Gaussian field with a logistic
//! (Bernoulli) likelihood, and the marginal posterior of the range parameter
//! on a grid.

use std::time::Instant;

use serde::Serialize;

use crate::array::{self, diag, diag_from, ew_binary, ew_unary, BinaryOp, MPArray, UnaryOp};
use crate::error::{Error, Result};
use crate::linalg::{chol, matmul, solve};
use crate::precision::Precision;

use super::covariance::{line_locations, map_distances, sample_gp};
use super::rng::Rng;

pub const SIGMA_TRUE: f64 = 0.1;
pub const BETA_TRUE: f64 = 10.0;
pub const ALPHA_TRUE: f64 = 0.6;
pub const MODE_TOL: f64 = 1e-12;
pub const MODE_MAX_ITER: usize = 200;

/// Binary observations on a line, with their distance matrix.
#[derive(Debug, Clone)]
pub struct LaplaceData {
    pub d: MPArray,
    pub y: Vec<f64>,
    pub latent: Vec<f64>,
}

/// Draws a latent field with covariance `sigma exp(-D / alpha)` at
/// `n` equally spaced points on `[0, n]`, then `y ~ Bernoulli(logistic(beta x))`.
pub fn generate_data(n: usize, seed: u64) -> Result<LaplaceData> {
    let (_, d) = line_locations(n);
    let cov = map_distances(&d, Precision::Double, |v| {
        SIGMA_TRUE * (-v / ALPHA_TRUE).exp()
    })?;
    let mut rng = Rng::new(seed);
    let latent = sample_gp(&cov, &mut rng)?.to_doubles();
    let y = latent
        .iter()
        .map(|&x| f64::from(rng.bernoulli(logistic(BETA_TRUE * x))))
        .collect();
    Ok(LaplaceData { d, y, latent })
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// First and second derivatives of the log likelihood in `x`.
pub fn gradients(x: &[f64], y: &[f64], beta: f64) -> (Vec<f64>, Vec<f64>) {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let s = logistic(beta * xi);
            (beta * yi - beta * s, -beta * beta * s * (1.0 - s))
        })
        .unzip()
}

/// Mode of the latent conditional and the quantities around it.
#[derive(Debug, Clone)]
pub struct LaplaceState {
    pub q: MPArray,
    pub x0: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    /// `Q - diag(g2)`, the negative Hessian of the log posterior at `x0`.
    pub h: MPArray,
    pub iterations: usize,
}

/// Precision matrix `(sigma exp(-D / alpha))⁻¹` at `precision`.
pub fn precision_matrix(
    d: &MPArray,
    alpha: f64,
    sigma: f64,
    precision: Precision,
) -> Result<MPArray> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::InvalidParam(format!(
            "range {alpha} must be positive"
        )));
    }
    let cov = map_distances(d, precision, |v| sigma * (-v / alpha).exp())?;
    solve(&cov, None)
}

/// Newton iteration `x <- (Q - diag g2)⁻¹ (g1 - x g2)` from `x = 0`, stopping
/// once the mean squared update is below `tol`.
pub fn laplace_mode(q: &MPArray, y: &[f64], beta: f64, tol: f64) -> Result<LaplaceState> {
    let n = y.len();
    if q.dims() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "precision {:?} for {n} observations",
            q.dims()
        )));
    }
    let p = q.precision();
    let mut x = vec![0.0; n];
    for iter in 1..=MODE_MAX_ITER {
        let (g1, g2) = gradients(&x, y, beta);
        let a = ew_binary(
            BinaryOp::Sub,
            q,
            &diag_from(&MPArray::from_vector(&g2, p), n)?,
        )?;
        let rhs: Vec<f64> = g1
            .iter()
            .zip(&g2)
            .zip(&x)
            .map(|((g1, g2), x)| g1 - x * g2)
            .collect();
        let next = solve(&a, Some(&MPArray::from_vector(&rhs, p)))?.to_doubles();
        let msd = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n as f64;
        x = next;
        if msd < tol {
            let (g1, g2) = gradients(&x, y, beta);
            let neg_g2: Vec<f64> = g2.iter().map(|v| -v).collect();
            let h = ew_binary(
                BinaryOp::Add,
                q,
                &diag_from(&MPArray::from_vector(&neg_g2, p), n)?,
            )?;
            return Ok(LaplaceState {
                q: q.clone(),
                x0: x,
                g1,
                g2,
                h,
                iterations: iter,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MODE_MAX_ITER,
    })
}

/// `2 sum(log(diag(chol(A))))`.
pub fn log_det_spd(a: &MPArray) -> Result<f64> {
    let u = chol(a)?;
    Ok(2.0 * array::sum(&ew_unary(UnaryOp::Log, &diag(&u)?)?)?)
}

/// Terms of the Laplace log posterior at one range value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogPosterior {
    pub value: f64,
    pub log_lik: f64,
    pub logdet_q: f64,
    pub logdet_h: f64,
    pub quad: f64,
    pub iterations: usize,
}

/// Unnormalized Laplace log posterior of the range `alpha`.
pub fn laplace_log_posterior(
    alpha: f64,
    d: &MPArray,
    y: &[f64],
    precision: Precision,
    sigma: f64,
    beta: f64,
) -> Result<LogPosterior> {
    let q = precision_matrix(d, alpha, sigma, precision)?;
    let state = laplace_mode(&q, y, beta, MODE_TOL)?;
    let uq = chol(&q)?;
    let logdet_q = 2.0 * array::sum(&ew_unary(UnaryOp::Log, &diag(&uq)?)?)?;
    let logdet_h = log_det_spd(&state.h)?;
    let x0 = MPArray::from_vector(&state.x0, precision);
    let quad = array::square_sum(&matmul(&uq, &x0)?)?;
    let log_lik: f64 = state
        .x0
        .iter()
        .zip(y)
        .map(|(&x, &yi)| beta * x * yi - log1p_exp(beta * x))
        .sum();
    Ok(LogPosterior {
        value: log_lik + 0.5 * logdet_q - 0.5 * quad - 0.5 * logdet_h,
        log_lik,
        logdet_q,
        logdet_h,
        quad,
        iterations: state.iterations,
    })
}

/// Composite Simpson weights `1, 4, 2, ..., 2, 4, 1` for an odd count.
pub fn simpson_weights(count: usize) -> Result<Vec<f64>> {
    if count < 3 || count.is_multiple_of(2) {
        return Err(Error::InvalidParam(format!(
            "Simpson's rule needs an odd number of at least 3 points, got {count}"
        )));
    }
    Ok((0..count)
        .map(|i| {
            if i == 0 || i == count - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            }
        })
        .collect())
}

/// Simpson integral of samples `f` at spacing `h`.
pub fn simpson(f: &[f64], h: f64) -> Result<f64> {
    let w = simpson_weights(f.len())?;
    Ok(w.iter().zip(f).map(|(w, f)| w * f).sum::<f64>() * h / 3.0)
}

/// `count` equally spaced points from `lo` to `hi`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count).map(|i| lo + i as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorGrid {
    pub precision: Precision,
    pub alpha: Vec<f64>,
    pub posterior: Vec<f64>,
    /// Centered log posterior values.
    pub lpost: Vec<f64>,
    pub elapsed_seconds: f64,
}

impl PosteriorGrid {
    pub fn argmax(&self) -> f64 {
        let i = (0..self.posterior.len())
            .max_by(|&a, &b| self.posterior[a].total_cmp(&self.posterior[b]))
            .unwrap_or(0);
        self.alpha[i]
    }

    pub fn integral(&self) -> f64 {
        let h = self.alpha[1] - self.alpha[0];
        simpson(&self.posterior, h).unwrap_or(f64::NAN)
    }
}

/// Centers `lpost`, exponentiates, and divides by the Simpson integral.
pub fn normalize_posterior(lpost: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mean = lpost.iter().sum::<f64>() / lpost.len() as f64;
    let centered: Vec<f64> = lpost.iter().map(|v| v - mean).collect();
    let dens: Vec<f64> = centered.iter().map(|v| v.exp()).collect();
    let z = simpson(&dens, h)?;
    Ok((centered, dens.iter().map(|v| v / z).collect()))
}

/// Posterior of `alpha` over `alpha_grid` (uniform spacing, odd count).
pub fn posterior_grid(
    d: &MPArray,
    y: &[f64],
    alpha_grid: &[f64],
    precision: Precision,
) -> Result<PosteriorGrid> {
    simpson_weights(alpha_grid.len())?;
    let start = Instant::now();
    let lpost = alpha_grid
        .iter()
        .map(|&a| laplace_log_posterior(a, d, y, precision, SIGMA_TRUE, BETA_TRUE).map(|l| l.value))
        .collect::<Result<Vec<f64>>>()?;
    let elapsed_seconds = start.elapsed().as_secs_f64();
    let h = alpha_grid[1] - alpha_grid[0];
    let (lpost, posterior) = normalize_posterior(&lpost, h)?;
    Ok(PosteriorGrid {
        precision,
        alpha: alpha_grid.to_vec(),
        posterior,
        lpost,
        elapsed_seconds,
    })
}

/// The 21-point grid on `[0.05, 0.95]`.
pub fn default_alpha_grid() -> Vec<f64> {
    linspace(0.05, 0.95, 21)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_for_quadratics() {
        let xs = linspace(0.0, 1.0, 21);
        let f: Vec<f64> = xs.iter().map(|x| x * x).collect();
        assert!((simpson(&f, 0.05).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(simpson(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn flat_posterior_is_uniform() {
        let (_, post) = normalize_posterior(&[3.0; 21], 0.045).unwrap();
        for v in post {
            assert!((v - 1.0 / 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_is_stationary() {
        let data = generate_data(40, 4).unwrap();
        let q = precision_matrix(&data.d, 0.6, SIGMA_TRUE, Precision::Double).unwrap();
        let s = laplace_mode(&q, &data.y, BETA_TRUE, MODE_TOL).unwrap();
        let qx = matmul(&q, &MPArray::from_vector(&s.x0, Precision::Double))
            .unwrap()
            .to_doubles();
        let grad =
            s.g1.iter()
                .zip(&qx)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        assert!(grad <= 1e-5, "{grad}");
        assert!(s.g2.iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn symmetric_mode_is_constant() {
        let n = 6;
        let q = ew_binary(
            BinaryOp::Mul,
            &MPArray::identity(n, Precision::Double),
            &MPArray::from_vector(&[3.0], Precision::Double),
        )
        .unwrap();
        let s = laplace_mode(&q, &[1.0; 6], BETA_TRUE, MODE_TOL).unwrap();
        assert!(s.x0.iter().all(|&v| v == s.x0[0]));
    }

    #[test]
    fn logdet_h_dominates() {
        let data = generate_data(30, 1).unwrap();
        let lp = laplace_log_posterior(
            0.5,
            &data.d,
            &data.y,
            Precision::Double,
            SIGMA_TRUE,
            BETA_TRUE,
        )
        .unwrap();
        assert!(lp.logdet_h >= lp.logdet_q);
        let q = precision_matrix(&data.d, 0.5, SIGMA_TRUE, Precision::Double).unwrap();
        let s = laplace_mode(&q, &data.y, BETA_TRUE, MODE_TOL).unwrap();
        let x = MPArray::from_vector(&s.x0, Precision::Double);
        let direct: f64 = matmul(&q, &x)
            .unwrap()
            .to_doubles()
            .iter()
            .zip(&s.x0)
            .map(|(a, b)| a * b)
            .sum();
        assert!(((lp.quad - direct) / direct).abs() < 1e-8);
    }

    #[test]
    fn stable_helpers() {
        assert_eq!(log1p_exp(1000.0), 1000.0);
        assert!((log1p_exp(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(logistic(-1000.0), 0.0);
    }
}
