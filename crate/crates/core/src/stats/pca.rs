//! Empirical orthogonal functions through the SVD of a space-time matrix.

use std::time::Instant;

use crate::array::{diag_from, MPArray, Placement};
use crate::error::{Error, Result};
use crate::linalg::{matmul, svd};
use crate::precision::Precision;

use super::rng::Rng;

#[derive(Debug, Clone)]
pub struct PcaResult {
    pub precision: Precision,
    /// Spatial patterns, `n x k`.
    pub eofs: MPArray,
    /// Time coefficients `U diag(d)`, `t x k`.
    pub scores: MPArray,
    /// Percent of total variance for each of the first `k` components.
    pub pct_var: Vec<f64>,
    pub elapsed_seconds: f64,
}

/// Leading `k` EOFs of the `t x n` data matrix `x`, computed at `precision`.
///
/// The data are used as given; center them first for anomaly EOFs.
pub fn pca_eof(x: &MPArray, k: usize, precision: Precision) -> Result<PcaResult> {
    let start = Instant::now();
    let (t, n) = x.dims();
    if k == 0 || k > t.min(n) {
        return Err(Error::InvalidParam(format!(
            "k = {k} components for a {t} x {n} matrix"
        )));
    }
    let xp = x.convert(precision);
    let r = svd(&xp, k as i64, k as i64)?;
    let d = r.d.to_doubles();
    let total: f64 = d.iter().map(|v| v * v).sum();
    let pct_var = d[..k].iter().map(|v| 100.0 * v * v / total).collect();
    let dk = MPArray::from_vector(&d[..k], precision);
    let scores = matmul(&r.u, &diag_from(&dk, k)?)?;
    Ok(PcaResult {
        precision,
        eofs: r.v,
        scores,
        pct_var,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Flips each column of `eofs` whose inner product with the matching column
/// of `reference` is negative.
pub fn sign_align(eofs: &MPArray, reference: &MPArray) -> Result<MPArray> {
    if eofs.dims() != reference.dims() {
        return Err(Error::ShapeMismatch(format!(
            "aligning {:?} to {:?}",
            eofs.dims(),
            reference.dims()
        )));
    }
    let (rows, cols) = eofs.dims();
    let mut x = eofs.to_doubles();
    let r = reference.to_doubles();
    for j in 0..cols {
        let col = j * rows..(j + 1) * rows;
        let ip: f64 = x[col.clone()]
            .iter()
            .zip(&r[col.clone()])
            .map(|(a, b)| a * b)
            .sum();
        if ip < 0.0 {
            x[col].iter_mut().for_each(|v| *v = -*v);
        }
    }
    MPArray::from_doubles(&x, rows, cols, eofs.precision(), Placement::Cpu)
}

/// Pearson correlation of column `j` of two equally shaped matrices.
pub fn column_correlation(a: &MPArray, b: &MPArray, j: usize) -> f64 {
    let rows = a.rows();
    let x = &a.to_doubles()[j * rows..(j + 1) * rows];
    let y = &b.to_doubles()[j * rows..(j + 1) * rows];
    let mx = x.iter().sum::<f64>() / rows as f64;
    let my = y.iter().sum::<f64>() / rows as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (u, v) in x.iter().zip(y) {
        sxy += (u - mx) * (v - my);
        sxx += (u - mx) * (u - mx);
        syy += (v - my) * (v - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Synthetic space-time field: `rank` separable modes (smooth temporal
/// oscillations times random spatial patterns) with decreasing amplitude,
/// plus white noise of standard deviation `noise`. Returned at double.
pub fn synthetic_field(t: usize, n: usize, rank: usize, noise: f64, seed: u64) -> MPArray {
    let mut rng = Rng::new(seed);
    let mut x = vec![0.0; t * n];
    for r in 0..rank {
        let amp = 5.0 / (r + 1) as f64;
        let freq = (r + 1) as f64;
        let phase = rng.uniform() * std::f64::consts::TAU;
        let pattern = rng.normal_vec(n);
        for (j, &p) in pattern.iter().enumerate() {
            for i in 0..t {
                let time = (std::f64::consts::TAU * freq * i as f64 / t as f64 + phase).sin();
                x[j * t + i] += amp * time * p;
            }
        }
    }
    for v in x.iter_mut() {
        *v += noise * rng.normal();
    }
    MPArray::from_doubles(&x, t, n, Precision::Double, Placement::Cpu).expect("t x n buffer")
}
