//! Statistical workloads built on the array and linalg layers: Gaussian
//! process likelihoods and fitting, a Langevin sampler, EOF analysis, and a
//! Laplace-approximated hyperparameter posterior.

pub mod covariance;
pub mod laplace;
pub mod likelihood;
pub mod mala;
pub mod pca;
pub mod rng;

pub use covariance::{exp_cov, grid_locations, matern_cov, sample_gp, MaternParams};
pub use laplace::{
    laplace_log_posterior, laplace_mode, posterior_grid, LaplaceState, PosteriorGrid,
};
pub use likelihood::{
    gaussian_nll, matern_mle, nelder_mead, JitterPolicy, MleResult, NelderMeadConfig,
    DEFAULT_MLE_INIT,
};
pub use mala::{mala_run, GaussianTarget, MalaConfig, MalaRun, MalaSampler};
pub use pca::{pca_eof, sign_align, PcaResult};
pub use rng::Rng;
