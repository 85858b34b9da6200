//! Factor-model covariance estimation via regularized PCA.
//!
//! The crate estimates an M x M covariance matrix `Sigma = F + R` (low-rank
//! factor part plus diagonal residual) from zero-mean Gaussian samples, with
//! the goal of maximizing out-of-sample log-likelihood. It provides:
//!
//! * six estimators: rank-constrained PCA with uniform residuals (URM), its
//!   trace-penalized counterpart solved by eigenvalue soft-thresholding
//!   (UTM), factor-analysis EM, a marginal-variance-preserving PCA heuristic
//!   (MRH), a trace penalty with free diagonal (TM), and a scaled trace
//!   penalty with componentwise data scaling (STM);
//! * holdout cross-validation and a sliding-window protocol for time series;
//! * synthetic generators for uniform- and nonuniform-residual ground truth;
//! * a price-to-normalized-log-return preprocessing pipeline;
//! * slow reference solvers (ADMM) and Monte Carlo verifiers that back the
//!   fast estimators with independent numerical checks;
//! * experiment aggregation: confidence intervals and the equivalent data
//!   requirement metric.
//!
//! See the `examples/` directory for one runnable program per capability and
//! the `factorlens` binary for a scriptable command-line front end.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod factor;
pub mod findata;
pub mod likelihood;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod select;
pub mod study;
pub mod synth;

pub mod cli;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use factor::FactorModelEstimate;
pub use likelihood::{avg_loglik, expected_loglik, kl_divergence, total_loglik};
pub use linalg::{eigh_desc, sample_covariance, CovMatrix, EigenSystem, SampleStats};
