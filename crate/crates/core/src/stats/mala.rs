//! Preconditioned Metropolis-adjusted Langevin sampler for a Gaussian target.

use std::time::Instant;

use crate::array::{ew_binary, ew_scalar, transpose, BinaryOp, MPArray};
use crate::error::{Error, Result};
use crate::linalg::{chol, matmul, solve};
use crate::precision::Precision;

use super::rng::Rng;

/// `N(mu, sigma)`.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    pub mu: Vec<f64>,
    pub sigma: MPArray,
}

/// Step size `h`, preconditioner `M`, chain length and seed.
#[derive(Debug, Clone)]
pub struct MalaConfig {
    pub h: f64,
    pub m: MPArray,
    pub iters: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MalaRun {
    pub precision: Precision,
    /// Chain states, `n x iters` column-major, stored in double.
    pub trace: Vec<f64>,
    pub n: usize,
    pub iters: usize,
    pub accepted: usize,
    /// The first proposal, before the accept step.
    pub first_proposal: Vec<f64>,
    pub elapsed_seconds: f64,
}

impl MalaRun {
    pub fn accept_rate(&self) -> f64 {
        if self.iters == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iters as f64
        }
    }

    pub fn state(&self, iter: usize) -> &[f64] {
        &self.trace[iter * self.n..(iter + 1) * self.n]
    }
}

/// Matrices precomputed once per run, all held at the run's precision.
#[derive(Debug, Clone)]
pub struct MalaSampler {
    precision: Precision,
    h: f64,
    mu: MPArray,
    m: MPArray,
    sigma_inv: MPArray,
    /// `chol(h M)ᵀ`
    l: MPArray,
    /// `(h M)⁻¹`
    hm_inv: MPArray,
}

/// `xᵀ A x`, with the product at the array precision and the sum in double.
fn quad_form(a: &MPArray, x: &MPArray) -> Result<f64> {
    let ax = matmul(a, x)?.to_doubles();
    Ok(x.to_doubles().iter().zip(&ax).map(|(u, v)| u * v).sum())
}

impl MalaSampler {
    pub fn new(target: &GaussianTarget, h: f64, m: &MPArray, precision: Precision) -> Result<Self> {
        if h.is_nan() || h <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "step size {h} must be positive"
            )));
        }
        let n = target.mu.len();
        if target.sigma.dims() != (n, n) || m.dims() != (n, n) {
            return Err(Error::ShapeMismatch(format!(
                "target of dimension {n} with covariance {:?} and preconditioner {:?}",
                target.sigma.dims(),
                m.dims()
            )));
        }
        let sigma = target.sigma.convert(precision);
        let m = m.convert(precision);
        let hm = ew_scalar(BinaryOp::Mul, &m, h)?;
        Ok(MalaSampler {
            precision,
            h,
            mu: MPArray::from_vector(&target.mu, precision),
            sigma_inv: solve(&sigma, None)?,
            l: transpose(&chol(&hm)?)?,
            hm_inv: solve(&hm, None)?,
            m,
        })
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    /// `x - t M Σ⁻¹ (x - mu)`, a gradient step on the log target.
    pub fn step(&self, x: &MPArray, t: f64) -> Result<MPArray> {
        let centered = ew_binary(BinaryOp::Sub, x, &self.mu)?;
        let score = matmul(&self.sigma_inv, &centered)?;
        let drift = matmul(&self.m, &score)?;
        ew_binary(BinaryOp::Sub, x, &ew_scalar(BinaryOp::Mul, &drift, t)?)
    }

    /// `step(z, h/2) + L eps`.
    pub fn propose(&self, z: &MPArray, eps: &[f64]) -> Result<MPArray> {
        let eps = MPArray::from_vector(eps, self.precision);
        ew_binary(
            BinaryOp::Add,
            &self.step(z, 0.5 * self.h)?,
            &matmul(&self.l, &eps)?,
        )
    }

    /// Unnormalized log target, `-(x - mu)ᵀ Σ⁻¹ (x - mu) / 2`.
    pub fn log_target(&self, x: &MPArray) -> Result<f64> {
        let c = ew_binary(BinaryOp::Sub, x, &self.mu)?;
        Ok(-0.5 * quad_form(&self.sigma_inv, &c)?)
    }

    /// Log proposal density of moving from `from` to `to`, up to a constant.
    pub fn log_proposal(&self, to: &MPArray, from: &MPArray) -> Result<f64> {
        let r = ew_binary(BinaryOp::Sub, to, &self.step(from, 0.5 * self.h)?)?;
        Ok(-0.5 * quad_form(&self.hm_inv, &r)?)
    }

    /// Metropolis-Hastings log ratio for moving `z -> z_prop`.
    pub fn log_accept_ratio(&self, z: &MPArray, z_prop: &MPArray) -> Result<f64> {
        let p_prop = self.log_target(z_prop)?;
        let p_curr = self.log_target(z)?;
        let q_curr = self.log_proposal(z, z_prop)?;
        let q_prop = self.log_proposal(z_prop, z)?;
        Ok(p_prop - p_curr + q_curr - q_prop)
    }

    /// Runs the chain from `z0`.
    ///
    /// Each iteration draws `n` normals for the proposal, then one uniform for
    /// the accept step, from the same stream.
    pub fn run(&self, z0: &[f64], iters: usize, rng: &mut Rng) -> Result<MalaRun> {
        let start = Instant::now();
        let n = z0.len();
        let mut z = MPArray::from_vector(z0, self.precision);
        let mut trace = Vec::with_capacity(n * iters);
        let mut accepted = 0;
        let mut first_proposal = Vec::new();
        for i in 0..iters {
            let eps = rng.normal_vec(n);
            let z_prop = self.propose(&z, &eps)?;
            if i == 0 {
                first_proposal = z_prop.to_doubles();
            }
            let log_ratio = self.log_accept_ratio(&z, &z_prop)?;
            if rng.uniform() < log_ratio.min(0.0).exp() {
                z = z_prop;
                accepted += 1;
            }
            trace.extend(z.to_doubles());
        }
        Ok(MalaRun {
            precision: self.precision,
            trace,
            n,
            iters,
            accepted,
            first_proposal,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        })
    }
}

/// Full run: builds the sampler, starts from uniform `z0` drawn from the
/// seeded stream, and samples `cfg.iters` states.
pub fn mala_run(
    target: &GaussianTarget,
    cfg: &MalaConfig,
    precision: Precision,
) -> Result<MalaRun> {
    let start = Instant::now();
    let sampler = MalaSampler::new(target, cfg.h, &cfg.m, precision)?;
    let mut rng = Rng::new(cfg.seed);
    let z0 = rng.uniform_vec(target.mu.len());
    let mut run = sampler.run(&z0, cfg.iters, &mut rng)?;
    run.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(run)
}
