//! Spatial locations, distance matrices and stationary covariances.

use serde::{Deserialize, Serialize};

use crate::array::{transpose, MPArray, Placement};
use crate::error::{Error, Result};
use crate::linalg::{chol, matmul};
use crate::precision::Precision;

use super::rng::Rng;

/// Matérn parameters `(nu, a, sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub nu: f64,
    pub a: f64,
    pub sigma2: f64,
}

impl MaternParams {
    pub fn validate(&self) -> Result<()> {
        if ![0.5, 1.5, 2.5].contains(&self.nu) {
            return Err(Error::InvalidParam(format!(
                "Matérn smoothness {} is not one of 0.5, 1.5, 2.5",
                self.nu
            )));
        }
        if self.a.is_nan() || self.a <= 0.0 || self.sigma2.is_nan() || self.sigma2 <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "Matérn range {} and variance {} must be positive",
                self.a, self.sigma2
            )));
        }
        Ok(())
    }

    /// Covariance at distance `d`.
    pub fn eval(&self, d: f64) -> f64 {
        let r = d / self.a;
        let s = self.sigma2;
        if self.nu == 0.5 {
            s * (-r).exp()
        } else if self.nu == 1.5 {
            let t = 3f64.sqrt() * r;
            s * (1.0 + t) * (-t).exp()
        } else {
            let t = 5f64.sqrt() * r;
            s * (1.0 + t + t * t / 3.0) * (-t).exp()
        }
    }
}

/// Euclidean distance matrix (double precision) between 2-D points.
pub fn distance_matrix(points: &[[f64; 2]]) -> MPArray {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            d[j * n + i] = dx.hypot(dy);
        }
    }
    MPArray::from_doubles(&d, n, n, Precision::Double, Placement::Cpu).expect("square buffer")
}

/// `M x M` grid on the unit square, x varying fastest, and its distances.
pub fn grid_locations(m: usize) -> Result<(Vec<[f64; 2]>, MPArray)> {
    if m < 2 {
        return Err(Error::InvalidParam(format!(
            "grid side {m} must be at least 2"
        )));
    }
    let step = (m - 1) as f64;
    let points: Vec<[f64; 2]> = (0..m)
        .flat_map(|y| (0..m).map(move |x| [x as f64 / step, y as f64 / step]))
        .collect();
    let d = distance_matrix(&points);
    Ok((points, d))
}

/// Points `seq(0, n, length = n)` on a line, and their distances.
pub fn line_locations(n: usize) -> (Vec<[f64; 2]>, MPArray) {
    let step = if n > 1 {
        n as f64 / (n - 1) as f64
    } else {
        0.0
    };
    let points: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 * step, 0.0]).collect();
    let d = distance_matrix(&points);
    (points, d)
}

/// Elementwise map of a distance matrix, evaluated in double and rounded to
/// `precision`.
pub fn map_distances(d: &MPArray, precision: Precision, f: impl Fn(f64) -> f64) -> Result<MPArray> {
    let (r, c) = d.dims();
    let values: Vec<f64> = d.to_doubles().into_iter().map(f).collect();
    MPArray::from_doubles(&values, r, c, precision, Placement::Cpu)
}

/// Matérn covariance for the closed-form smoothness values.
pub fn matern_cov(d: &MPArray, params: &MaternParams, precision: Precision) -> Result<MPArray> {
    params.validate()?;
    map_distances(d, precision, |x| params.eval(x))
}

/// `sigma2 * exp(-d / a)`.
pub fn exp_cov(d: &MPArray, sigma2: f64, a: f64, precision: Precision) -> Result<MPArray> {
    let params = MaternParams { nu: 0.5, a, sigma2 };
    matern_cov(d, &params, precision)
}

/// Draws `L eps` with `L = chol(cov)ᵀ` and standard normal `eps`.
pub fn sample_gp(cov: &MPArray, rng: &mut Rng) -> Result<MPArray> {
    let l = transpose(&chol(cov)?)?;
    let eps = MPArray::from_vector(&rng.normal_vec(cov.rows()), cov.precision());
    matmul(&l, &eps)
}
